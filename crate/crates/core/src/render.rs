//! Standalone color-coded HTML for word-level tags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::document::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::schemes::{SchemeId, TagId};

pub const UNKNOWN_COLOR: &str = "#c8c8c8";

/// Tag → CSS color.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Palette(pub BTreeMap<String, String>);

impl Palette {
    pub fn builtin(scheme: SchemeId) -> Palette {
        let pairs: &[(&str, &str)] = match scheme {
            SchemeId::Arrow => &[
                ("I1", "#8dd3c7"),
                ("I2", "#ffffb3"),
                ("E1", "#bebada"),
                ("E2", "#fb8072"),
                ("O", "#80b1d3"),
                ("C", "#fdb462"),
                ("T", "#b3de69"),
            ],
            SchemeId::Persuade => &[
                ("L", "#a6cee3"),
                ("P", "#1f78b4"),
                ("C1", "#b2df8a"),
                ("C2", "#33a02c"),
                ("R", "#fb9a99"),
                ("E", "#fdbf6f"),
                ("C3", "#cab2d6"),
            ],
            SchemeId::AaeBio
            | SchemeId::AaeComponent
            | SchemeId::AaeRelation
            | SchemeId::AaeStance => &[
                ("MC", "#e41a1c"),
                ("Cl", "#377eb8"),
                ("Pr", "#4daf4a"),
                ("B", "#ff7f00"),
                ("I", "#ffd92f"),
            ],
        };
        Palette(
            pairs
                .iter()
                .map(|(t, c)| (t.to_string(), c.to_string()))
                .collect(),
        )
    }

    /// `tag = color` lines; `#` starts a comment only at line start.
    pub fn parse(text: &str) -> Result<Palette> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, color) = line.split_once('=').ok_or_else(|| {
                Error::parse(i + 1, format!("expected `tag = color`, got `{line}`"))
            })?;
            let color = color.trim();
            if color.is_empty() || color.contains(['<', '>', '"', ';']) {
                return Err(Error::parse(i + 1, format!("bad color `{color}`")));
            }
            map.insert(tag.trim().to_string(), color.to_string());
        }
        Ok(Palette(map))
    }

    /// Overlay `other` on top of `self`.
    pub fn merged(mut self, other: Palette) -> Palette {
        self.0.extend(other.0);
        self
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub html: String,
    pub runs: usize,
    /// Tags drawn in the unknown color.
    pub unknown: Vec<String>,
}

/// Wrap each run of equal, non-None word tags in a colored element.
pub fn render_html(
    doc: &AnnotatedDocument,
    word_tags: &[TagId],
    palette: &Palette,
    title: &str,
) -> Result<Rendered> {
    if word_tags.len() != doc.words.len() {
        return Err(Error::usage(format!(
            "{} tags for {} words",
            word_tags.len(),
            doc.words.len()
        )));
    }
    let chars: Vec<char> = doc.text.chars().collect();
    let text = |a: usize, b: usize| escape(&chars[a..b].iter().collect::<String>());
    let mut body = String::new();
    let mut at = 0;
    let mut runs = 0;
    let mut used: Vec<&TagId> = Vec::new();
    let mut unknown = Vec::new();
    let mut i = 0;
    while i < word_tags.len() {
        let tag = &word_tags[i];
        let mut j = i + 1;
        while j < word_tags.len() && word_tags[j] == *tag {
            j += 1;
        }
        if !tag.is_none_tag() {
            let (start, end) = (doc.words[i].start, doc.words[j - 1].end);
            body.push_str(&text(at, start));
            let color = match palette.0.get(tag.as_str()) {
                Some(c) => c.as_str(),
                None => {
                    if !unknown.iter().any(|u| u == tag.as_str()) {
                        log::warn!("no color for tag `{tag}`");
                        unknown.push(tag.to_string());
                    }
                    UNKNOWN_COLOR
                }
            };
            let _ = write!(
                body,
                "<span class=\"tag\" data-tag=\"{t}\" title=\"{t}\" style=\"background:{color}\">{}</span>",
                text(start, end),
                t = escape(tag.as_str()),
            );
            at = end;
            runs += 1;
            if !used.contains(&tag) {
                used.push(tag);
            }
        }
        i = j;
    }
    body.push_str(&text(at, chars.len()));

    let mut legend = String::new();
    for t in &used {
        let color = palette
            .0
            .get(t.as_str())
            .map_or(UNKNOWN_COLOR, String::as_str);
        let _ = write!(
            legend,
            "<li><span class=\"swatch\" style=\"background:{color}\"></span>{}</li>",
            escape(t.as_str())
        );
    }
    let html = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title>\n<style>\n\
         body{{font-family:sans-serif;max-width:50em;margin:2em auto}}\n\
         .essay{{white-space:pre-wrap;line-height:1.6}}\n\
         .tag{{border-radius:3px}}\n\
         .legend{{list-style:none;padding:0}}\n\
         .legend li{{display:inline-block;margin-right:1em}}\n\
         .swatch{{display:inline-block;width:1em;height:1em;margin-right:.3em;vertical-align:middle}}\n\
         </style></head><body>\n<h1>{title}</h1>\n<ul class=\"legend\">{legend}</ul>\n\
         <div class=\"essay\">{body}</div>\n</body></html>\n",
        title = escape(title),
    );
    Ok(Rendered {
        html,
        runs,
        unknown,
    })
}
