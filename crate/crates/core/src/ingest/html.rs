//! HTML essay fragments: paragraphs come from `<p>` elements, all other
//! markup is dropped.

use crate::document::AnnotatedDocument;
use crate::schemes::SchemeId;

#[derive(Clone, Debug, PartialEq)]
pub struct HtmlEssay {
    pub doc: AnnotatedDocument,
    /// Set when the fragment had no `<p>` element and the whole text became
    /// one paragraph.
    pub paragraph_fallback: bool,
}

fn decode_entity(name: &str) -> Option<char> {
    match name {
        "amp" => Some('&'),
        "lt" => Some('<'),
        "gt" => Some('>'),
        "quot" => Some('"'),
        "apos" => Some('\''),
        "nbsp" => Some(' '),
        "mdash" => Some('\u{2014}'),
        "ndash" => Some('\u{2013}'),
        "rsquo" => Some('\u{2019}'),
        "lsquo" => Some('\u{2018}'),
        "rdquo" => Some('\u{201d}'),
        "ldquo" => Some('\u{201c}'),
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            char::from_u32(code)
        }
    }
}

/// Replace character references with the characters they name.
pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp + 1..];
        match tail.find(';').filter(|&semi| semi <= 10) {
            Some(semi) if decode_entity(&tail[..semi]).is_some() => {
                out.push(decode_entity(&tail[..semi]).unwrap());
                rest = &tail[semi + 1..];
            }
            _ => {
                out.push('&');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Tag {
    name: String,
    closing: bool,
    raw_len: usize,
}

fn read_tag(s: &str) -> Option<Tag> {
    debug_assert!(s.starts_with('<'));
    let end = s.find('>')?;
    let body = &s[1..end];
    let closing = body.starts_with('/');
    let name: String = body
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '!')
        .collect::<String>()
        .to_ascii_lowercase();
    Some(Tag {
        name,
        closing,
        raw_len: end + 1,
    })
}

/// Split an HTML fragment into paragraphs and build an untagged document.
pub fn parse_html_essay(doc_id: &str, html_content: &str) -> HtmlEssay {
    let mut paragraphs: Vec<String> = Vec::new();
    let mut loose = String::new();
    let mut current: Option<String> = None;
    let mut saw_p = false;
    let mut skip_until: Option<&'static str> = None;
    let mut rest = html_content;

    let flush_loose = |loose: &mut String, paragraphs: &mut Vec<String>| {
        if !loose.trim().is_empty() {
            paragraphs.push(loose.clone());
        }
        loose.clear();
    };

    while !rest.is_empty() {
        if rest.starts_with("<!--") {
            rest = rest.find("-->").map_or("", |e| &rest[e + 3..]);
            continue;
        }
        if rest.starts_with('<') {
            if let Some(tag) = read_tag(rest) {
                rest = &rest[tag.raw_len..];
                if let Some(stop) = skip_until {
                    if tag.closing && tag.name == stop {
                        skip_until = None;
                    }
                    continue;
                }
                match (tag.name.as_str(), tag.closing) {
                    ("script", false) => skip_until = Some("script"),
                    ("style", false) => skip_until = Some("style"),
                    ("p", false) => {
                        saw_p = true;
                        flush_loose(&mut loose, &mut paragraphs);
                        if let Some(p) = current.take() {
                            paragraphs.push(p);
                        }
                        current = Some(String::new());
                    }
                    ("p", true) => {
                        if let Some(p) = current.take() {
                            paragraphs.push(p);
                        }
                    }
                    ("br", _) => match current.as_mut() {
                        Some(p) => p.push(' '),
                        None => loose.push(' '),
                    },
                    _ => {}
                }
                continue;
            }
        }
        let next = rest[1..].find('<').map_or(rest.len(), |i| i + 1);
        if skip_until.is_none() {
            match current.as_mut() {
                Some(p) => p.push_str(&rest[..next]),
                None => loose.push_str(&rest[..next]),
            }
        }
        rest = &rest[next..];
    }
    if let Some(p) = current.take() {
        paragraphs.push(p);
    }
    flush_loose(&mut loose, &mut paragraphs);

    let paragraphs: Vec<String> = paragraphs
        .iter()
        .map(|p| collapse_whitespace(&unescape(p)))
        .filter(|p| !p.is_empty())
        .collect();
    let paragraph_fallback = !saw_p;
    if paragraph_fallback {
        log::warn!("{doc_id}: no paragraph elements, treating the essay as one paragraph");
    }
    let paragraphs = if paragraph_fallback {
        vec![paragraphs.join(" ")]
    } else {
        paragraphs
    };
    HtmlEssay {
        doc: AnnotatedDocument::from_paragraphs(doc_id, &paragraphs, SchemeId::Arrow),
        paragraph_fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_paragraphs_three_sentences() {
        let e = parse_html_essay("d", "<p>A. B.</p><p>C.</p>");
        assert_eq!(e.doc.paragraphs.len(), 2);
        assert_eq!(e.doc.sentence_strs(), vec!["A.", "B.", "C."]);
        assert!(!e.paragraph_fallback);
    }

    #[test]
    fn inline_markup_stripped() {
        let e = parse_html_essay("d", "<p><b>A</b>. B.</p>");
        assert_eq!(e.doc.text, "A. B.");
    }

    #[test]
    fn paragraph_boundary_closes_sentence() {
        let e = parse_html_essay("d", "<p>First part without stop</p><p>Second.</p>");
        assert_eq!(
            e.doc.sentence_strs(),
            vec!["First part without stop", "Second."]
        );
    }

    #[test]
    fn no_paragraph_elements_falls_back() {
        let e = parse_html_essay("d", "<div>Just <i>text</i>. More.</div>");
        assert!(e.paragraph_fallback);
        assert_eq!(e.doc.paragraphs.len(), 1);
        assert_eq!(e.doc.text, "Just text. More.");
    }

    #[test]
    fn entities_attributes_and_comments() {
        let e = parse_html_essay(
            "d",
            "<p class=\"x\">Fish &amp; chips &#8212; yum.<!-- hidden --></p>\n<P>It&#39;s <br/>good.</P><script>var a = '<p>';</script>",
        );
        assert_eq!(e.doc.text, "Fish & chips \u{2014} yum.\nIt's good.");
    }

    #[test]
    fn unescape_leaves_unknown_entities() {
        assert_eq!(unescape("a &bogus; b &lt;"), "a &bogus; b <");
    }
}
