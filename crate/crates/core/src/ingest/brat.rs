//! Reader for brat standoff essays (`.txt` + `.ann`), as distributed with
//! the argument-annotated essays corpus.

use std::collections::HashMap;

use crate::document::{
    AnnotatedDocument, AnnotationSpan, ArgRelation, Rater, RelationKind, Stance, Unit,
};
use crate::error::{Error, Result};
use crate::ingest::OffsetMap;
use crate::schemes::{SchemeId, TagId};

fn component_tag(label: &str) -> Option<&'static str> {
    match label {
        "MajorClaim" => Some("MC"),
        "Claim" => Some("Cl"),
        "Premise" => Some("Pr"),
        _ => None,
    }
}

/// Parse a `T` line body: `Label start end[;start end...]`.
fn parse_text_bound(body: &str, line: usize) -> Result<(&str, usize, usize)> {
    let mut it = body.splitn(2, ' ');
    let label = it.next().unwrap_or_default();
    let rest = it
        .next()
        .ok_or_else(|| Error::parse(line, "text-bound annotation without offsets"))?;
    let mut start = usize::MAX;
    let mut end = 0;
    for frag in rest.split(';') {
        let nums: Vec<&str> = frag.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(Error::parse(line, format!("bad offset fragment `{frag}`")));
        }
        let s: usize = nums[0]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad offset `{}`", nums[0])))?;
        let e: usize = nums[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad offset `{}`", nums[1])))?;
        start = start.min(s);
        end = end.max(e);
    }
    Ok((label, start, end))
}

fn parse_arg<'a>(field: Option<&'a str>, key: &str, line: usize) -> Result<&'a str> {
    field
        .and_then(|f| f.strip_prefix(key))
        .and_then(|f| f.strip_prefix(':'))
        .ok_or_else(|| Error::parse(line, format!("expected `{key}:<id>`")))
}

/// Build a document from one essay's text and standoff annotations.
///
/// Every `T` line becomes a char-range component tagged `MC`, `Cl` or `Pr`;
/// every `R` line a linked relation carrying its support/attack stance; every
/// claim `Stance` attribute a claim-stance relation.
pub fn parse_brat_essay(
    doc_id: &str,
    txt_content: &str,
    ann_content: &str,
) -> Result<AnnotatedDocument> {
    let offsets = OffsetMap::new(txt_content);
    let mut doc = AnnotatedDocument::from_text(doc_id, txt_content, SchemeId::AaeComponent);
    let n_chars = doc.char_len();

    struct Pending<'a> {
        line: usize,
        id: &'a str,
        body: &'a str,
    }
    let mut attrs = Vec::new();
    let mut rels = Vec::new();
    for (i, raw) in ann_content.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut fields = raw.split('\t');
        let id = fields.next().unwrap_or_default();
        let body = fields
            .next()
            .ok_or_else(|| Error::parse(line, "missing tab-separated annotation body"))?;
        match id.chars().next() {
            Some('T') => {
                let (label, start, end) = parse_text_bound(body, line)?;
                let tag = component_tag(label).ok_or_else(|| {
                    Error::parse(line, format!("unknown component type `{label}`"))
                })?;
                let (start, end) = (offsets.map(start), offsets.map(end));
                if start >= end || end > n_chars {
                    return Err(Error::range(format!(
                        "{doc_id}: line {line}: span [{start},{end}) outside text of {n_chars} chars"
                    )));
                }
                if let Some(expected) = fields.next() {
                    let got = doc.slice(crate::document::CharRange::new(start, end));
                    if got.split_whitespace().ne(expected.split_whitespace()) {
                        log::warn!("{doc_id}: line {line}: span text differs from the annotation");
                    }
                }
                doc.spans.push(AnnotationSpan {
                    span_id: id.to_string(),
                    tag: TagId::from(tag),
                    unit: Unit::Char,
                    start,
                    end,
                    rater: Rater::Human1,
                });
            }
            Some('A') => attrs.push(Pending { line, id, body }),
            Some('R') => rels.push(Pending { line, id, body }),
            _ => {
                return Err(Error::parse(
                    line,
                    format!("unexpected annotation id `{id}`"),
                ))
            }
        }
    }

    let known: HashMap<&str, &TagId> = doc
        .spans
        .iter()
        .map(|s| (s.span_id.as_str(), &s.tag))
        .collect();
    let first_mc = doc
        .components()
        .into_iter()
        .find(|s| s.tag.as_str() == "MC")
        .map(|s| s.span_id.clone())
        .unwrap_or_default();

    let mut relations = Vec::new();
    for r in rels {
        let mut parts = r.body.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let stance = match kind {
            "supports" => Stance::Support,
            "attacks" => Stance::Attack,
            other => {
                return Err(Error::parse(
                    r.line,
                    format!("unknown relation type `{other}`"),
                ))
            }
        };
        let source = parse_arg(parts.next(), "Arg1", r.line)?;
        let target = parse_arg(parts.next(), "Arg2", r.line)?;
        for arg in [source, target] {
            if !known.contains_key(arg) {
                return Err(Error::parse(
                    r.line,
                    format!("{}: unknown component `{arg}`", r.id),
                ));
            }
        }
        if source == target {
            return Err(Error::parse(
                r.line,
                format!("{}: relation from a component to itself", r.id),
            ));
        }
        relations.push(ArgRelation {
            source: source.to_string(),
            target: target.to_string(),
            linked: true,
            stance,
            kind: RelationKind::Link,
        });
    }
    for a in attrs {
        let parts: Vec<&str> = a.body.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "Stance" {
            return Err(Error::parse(
                a.line,
                format!("{}: expected `Stance <id> For|Against`", a.id),
            ));
        }
        if !known.contains_key(parts[1]) {
            return Err(Error::parse(
                a.line,
                format!("{}: unknown component `{}`", a.id, parts[1]),
            ));
        }
        let stance = match parts[2] {
            "For" => Stance::Support,
            "Against" => Stance::Attack,
            other => {
                return Err(Error::parse(
                    a.line,
                    format!("unknown stance value `{other}`"),
                ))
            }
        };
        relations.push(ArgRelation {
            source: parts[1].to_string(),
            target: first_mc.clone(),
            linked: false,
            stance,
            kind: RelationKind::ClaimStance,
        });
    }
    doc.relations = relations;
    Ok(doc)
}
