//! Reader for PERSUADE-style discourse tables: one CSV row per discourse
//! element with a char range and a whitespace word-index string.

use std::collections::HashMap;

use crate::document::{AnnotatedDocument, AnnotationSpan, CharRange, Rater, Unit};
use crate::error::{Error, Result};
use crate::ingest::OffsetMap;
use crate::schemes::{SchemeId, TagId};

/// Short tag for a discourse type name (full or abbreviated).
pub fn persuade_tag(discourse_type: &str) -> Option<&'static str> {
    match discourse_type.trim() {
        "Lead" | "L" => Some("L"),
        "Position" | "P" => Some("P"),
        "Claim" | "C1" => Some("C1"),
        "Counterclaim" | "C2" => Some("C2"),
        "Rebuttal" | "R" => Some("R"),
        "Evidence" | "E" => Some("E"),
        "Concluding Statement" | "C3" => Some("C3"),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PersuadeOptions {
    /// Fail on char/word-index disagreements instead of trusting the word
    /// indices.
    pub strict: bool,
}

#[derive(Debug, Default)]
pub struct PersuadeTable {
    pub docs: Vec<AnnotatedDocument>,
    /// Data rows (1-based, header excluded) whose char range disagreed
    /// with their word indices and were resolved in favour of the indices.
    pub adjusted_rows: Vec<usize>,
}

struct Columns {
    id: usize,
    discourse_id: Option<usize>,
    start: Option<usize>,
    end: Option<usize>,
    kind: usize,
    prediction: usize,
    text: Option<usize>,
    prompt: Option<usize>,
}

fn find(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Columns> {
        let need = |names: &[&str]| {
            find(headers, names)
                .ok_or_else(|| Error::parse(1, format!("missing column `{}`", names[0])))
        };
        Ok(Columns {
            id: need(&["essay_id", "essay_id_comp", "id"])?,
            discourse_id: find(headers, &["discourse_id"]),
            start: find(headers, &["discourse_start"]),
            end: find(headers, &["discourse_end"]),
            kind: need(&["discourse_type"])?,
            prediction: need(&["predictionstring"])?,
            text: find(headers, &["full_text", "text"]),
            prompt: find(headers, &["prompt_name", "prompt"]),
        })
    }
}

/// Parse a discourse table. Essay text comes from a `full_text` column when
/// present, otherwise from `texts` keyed by essay id.
pub fn parse_persuade_table(
    csv_content: &str,
    texts: &HashMap<String, String>,
    options: PersuadeOptions,
) -> Result<PersuadeTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(csv_content.as_bytes());
    let cols = Columns::locate(reader.headers()?)?;

    let mut order: Vec<String> = Vec::new();
    let mut docs: HashMap<String, (AnnotatedDocument, String)> = HashMap::new();
    let mut adjusted = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        let line = row + 1;
        let id = record[cols.id].trim().to_string();
        if !docs.contains_key(&id) {
            let raw = match cols.text.map(|c| record[c].to_string()) {
                Some(t) => t,
                None => texts
                    .get(&id)
                    .cloned()
                    .ok_or_else(|| Error::parse(line, format!("no text for essay `{id}`")))?,
            };
            let mut doc = AnnotatedDocument::from_text(id.clone(), &raw, SchemeId::Persuade);
            doc.prompt = cols
                .prompt
                .map(|c| record[c].trim().to_string())
                .filter(|p| !p.is_empty());
            order.push(id.clone());
            docs.insert(id.clone(), (doc, raw));
        }
        let (doc, raw) = docs.get_mut(&id).expect("inserted above");

        let kind = record[cols.kind].trim();
        let prediction = record[cols.prediction].trim();
        if kind.is_empty() && prediction.is_empty() {
            continue;
        }
        let tag = persuade_tag(kind)
            .ok_or_else(|| Error::parse(line, format!("unknown discourse type `{kind}`")))?;
        let mut idx: Vec<usize> = prediction
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(line, format!("bad word index `{t}`")))
            })
            .collect::<Result<_>>()?;
        if idx.is_empty() {
            return Err(Error::parse(line, "empty predictionstring"));
        }
        idx.sort_unstable();
        idx.dedup();
        let (first, last) = (idx[0], *idx.last().unwrap());
        if last >= doc.words.len() {
            return Err(Error::range(format!(
                "row {row}: word index {last} beyond the {} words of `{id}`",
                doc.words.len()
            )));
        }
        if idx.len() != last - first + 1 {
            return Err(Error::Consistency(format!(
                "row {row}: word indices are not contiguous"
            )));
        }

        if let (Some(sc), Some(ec)) = (cols.start, cols.end) {
            let parse_off = |c: usize| -> Result<usize> {
                let v = record[c].trim();
                v.parse::<f64>()
                    .ok()
                    .filter(|x| *x >= 0.0)
                    .map(|x| x as usize)
                    .ok_or_else(|| Error::parse(line, format!("bad char offset `{v}`")))
            };
            let offsets = OffsetMap::new(raw);
            let (s, e) = (offsets.map(parse_off(sc)?), offsets.map(parse_off(ec)?));
            let by_words = CharRange::new(doc.words[first].start, doc.words[last].end);
            let chars: Vec<char> = doc.text.chars().collect();
            let (mut ts, mut te) = (s.min(chars.len()), e.min(chars.len()));
            while ts < te && chars[ts].is_whitespace() {
                ts += 1;
            }
            while te > ts && chars[te - 1].is_whitespace() {
                te -= 1;
            }
            if CharRange::new(ts, te) != by_words {
                if options.strict {
                    return Err(Error::Consistency(format!(
                        "row {row} (`{id}`): chars [{s},{e}) disagree with words {first}..={last} at chars [{},{})",
                        by_words.start, by_words.end
                    )));
                }
                adjusted.push(row);
            }
        }

        let span_id = cols
            .discourse_id
            .map(|c| record[c].trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("P{row}"));
        doc.spans.push(AnnotationSpan {
            span_id,
            tag: TagId::from(tag),
            unit: Unit::Word,
            start: first,
            end: last + 1,
            rater: Rater::Human1,
        });
    }

    if !adjusted.is_empty() {
        log::warn!(
            "{} row(s) had char offsets disagreeing with their word indices; word indices kept",
            adjusted.len()
        );
    }
    Ok(PersuadeTable {
        docs: order
            .into_iter()
            .map(|id| docs.remove(&id).expect("present").0)
            .collect(),
        adjusted_rows: adjusted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lead_essay() -> String {
        (0..50)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn one_lead_row() {
        let text = lead_essay();
        let end_char = text.split(' ').take(45).map(|w| w.len() + 1).sum::<usize>() - 1;
        let pred: Vec<String> = (0..45).map(|i| i.to_string()).collect();
        let csv = format!(
            "id,discourse_id,discourse_start,discourse_end,discourse_type,predictionstring\n\
             e1,d1,0,{end_char},Lead,{}\n",
            pred.join(" ")
        );
        let mut texts = HashMap::new();
        texts.insert("e1".to_string(), text);
        let t = parse_persuade_table(&csv, &texts, PersuadeOptions { strict: true }).unwrap();
        assert_eq!(t.docs.len(), 1);
        let d = &t.docs[0];
        assert_eq!(d.spans.len(), 1);
        assert_eq!(
            (d.spans[0].tag.as_str(), d.spans[0].end - d.spans[0].start),
            ("L", 45)
        );
        assert!(t.adjusted_rows.is_empty());
    }

    #[test]
    fn full_text_column_and_untagged_words() {
        let csv = "essay_id,full_text,discourse_type,predictionstring\n\
                   a,\"Hello there world\",,\n";
        let t = parse_persuade_table(csv, &HashMap::new(), PersuadeOptions::default()).unwrap();
        let d = &t.docs[0];
        assert!(d.spans.is_empty());
        assert_eq!(d.word_tags(None, &TagId::none()), vec![TagId::none(); 3]);
    }

    #[test]
    fn char_word_disagreement() {
        let csv = "id,discourse_start,discourse_end,discourse_type,predictionstring\n\
                   a,0,3,Claim,1 2\n";
        let mut texts = HashMap::new();
        texts.insert("a".to_string(), "one two three".to_string());
        let strict = parse_persuade_table(csv, &texts, PersuadeOptions { strict: true });
        assert!(matches!(strict, Err(Error::Consistency(m)) if m.contains("row 1")));
        let lenient = parse_persuade_table(csv, &texts, PersuadeOptions::default()).unwrap();
        assert_eq!(lenient.adjusted_rows, vec![1]);
        let s = &lenient.docs[0].spans[0];
        assert_eq!((s.start, s.end), (1, 3));
    }

    #[test]
    fn surrounding_whitespace_is_tolerated() {
        let csv = "id,discourse_start,discourse_end,discourse_type,predictionstring\n\
                   a,3,14.0,Evidence,1 2\n";
        let mut texts = HashMap::new();
        texts.insert("a".to_string(), "one two three ".to_string());
        let t = parse_persuade_table(csv, &texts, PersuadeOptions { strict: true }).unwrap();
        assert!(t.adjusted_rows.is_empty());
    }

    #[test]
    fn bad_rows() {
        let mut texts = HashMap::new();
        texts.insert("a".to_string(), "one two".to_string());
        let unknown = "id,discourse_type,predictionstring\na,Opinion,0\n";
        assert!(matches!(
            parse_persuade_table(unknown, &texts, PersuadeOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
        let beyond = "id,discourse_type,predictionstring\na,Lead,0 1 2\n";
        assert!(matches!(
            parse_persuade_table(beyond, &texts, PersuadeOptions::default()),
            Err(Error::Range(_))
        ));
        let missing = "id,discourse_type\na,Lead\n";
        assert!(parse_persuade_table(missing, &texts, PersuadeOptions::default()).is_err());
    }
}
