//! The canonical annotated-document model shared by every stage.
//!
//! All ranges are half-open and measured in Unicode scalar values (chars),
//! matching the standoff convention of the source corpora. Text is NFC
//! normalized on construction.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::ingest::sentences::split_sentences;
use crate::schemes::{SchemeId, TagId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharRange {
    pub start: usize,
    pub end: usize,
}

impl CharRange {
    pub fn new(start: usize, end: usize) -> Self {
        CharRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &CharRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlap(&self, other: &CharRange) -> usize {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }
}

/// Coordinate system of an [`AnnotationSpan`] range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "sentence")]
    Sentence,
    #[serde(rename = "word-range")]
    Word,
    #[serde(rename = "char-range")]
    Char,
}

/// Who produced an annotation. Ordering is the preference order used when
/// a document carries several raters: resolved, first human, second human,
/// then models by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rater {
    Resolved,
    Human1,
    Human2,
    Model(u32),
}

impl fmt::Display for Rater {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rater::Resolved => f.write_str("resolved"),
            Rater::Human1 => f.write_str("human-1"),
            Rater::Human2 => f.write_str("human-2"),
            Rater::Model(k) => write!(f, "model-{k}"),
        }
    }
}

impl FromStr for Rater {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resolved" => Ok(Rater::Resolved),
            "human-1" => Ok(Rater::Human1),
            "human-2" => Ok(Rater::Human2),
            _ => s
                .strip_prefix("model-")
                .and_then(|k| k.parse().ok())
                .map(Rater::Model)
                .ok_or_else(|| Error::usage(format!("unknown rater `{s}`"))),
        }
    }
}

impl Serialize for Rater {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rater {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub span_id: String,
    pub tag: TagId,
    pub unit: Unit,
    pub start: usize,
    pub end: usize,
    pub rater: Rater,
}

impl AnnotationSpan {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Support,
    Attack,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    /// A same-paragraph link between two components.
    Link,
    /// The stance of a claim towards the major claim(s).
    ClaimStance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgRelation {
    pub source: String,
    /// For claim stances: the first major claim of the document, or empty
    /// when the document has none.
    pub target: String,
    pub linked: bool,
    pub stance: Stance,
    pub kind: RelationKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub source_scheme: SchemeId,
    pub text: String,
    pub paragraphs: Vec<CharRange>,
    pub sentences: Vec<CharRange>,
    pub words: Vec<CharRange>,
    #[serde(default)]
    pub spans: Vec<AnnotationSpan>,
    #[serde(default)]
    pub relations: Vec<ArgRelation>,
}

pub(crate) fn is_space(c: char) -> bool {
    c.is_whitespace()
}

/// Char offsets of whitespace-delimited words.
pub fn whitespace_words(text: &str) -> Vec<CharRange> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        match (is_space(c), start) {
            (true, Some(s)) => {
                out.push(CharRange::new(s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        out.push(CharRange::new(s, n));
    }
    out
}

/// Paragraph ranges: every line holding non-whitespace text, trimmed.
pub fn line_paragraphs(text: &str) -> Vec<CharRange> {
    let mut out = Vec::new();
    let mut line_start = 0;
    let chars: Vec<char> = text.chars().collect();
    let push = |from: usize, to: usize, out: &mut Vec<CharRange>| {
        let mut s = from;
        let mut e = to;
        while s < e && is_space(chars[s]) {
            s += 1;
        }
        while e > s && is_space(chars[e - 1]) {
            e -= 1;
        }
        if s < e {
            out.push(CharRange::new(s, e));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            push(line_start, i, &mut out);
            line_start = i + 1;
        }
    }
    push(line_start, chars.len(), &mut out);
    out
}

/// Byte offset of every char boundary; `len() == chars + 1`.
pub(crate) fn byte_offsets(text: &str) -> Vec<usize> {
    let mut v: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    v.push(text.len());
    v
}

impl AnnotatedDocument {
    /// Build an untagged document: NFC text, line paragraphs, rule-based
    /// sentences and whitespace words.
    pub fn from_text(doc_id: impl Into<String>, text: &str, scheme: SchemeId) -> Self {
        let text: String = text.nfc().collect();
        let paragraphs = line_paragraphs(&text);
        Self::with_paragraph_ranges(doc_id.into(), text, paragraphs, scheme)
    }

    /// Build from explicit paragraph texts, joined with newlines.
    pub fn from_paragraphs<S: AsRef<str>>(
        doc_id: impl Into<String>,
        paragraphs: &[S],
        scheme: SchemeId,
    ) -> Self {
        let mut text = String::new();
        let mut ranges = Vec::new();
        let mut pos = 0;
        for p in paragraphs {
            let p: String = p.as_ref().nfc().collect();
            let p = p.trim();
            if p.is_empty() {
                continue;
            }
            if !text.is_empty() {
                text.push('\n');
                pos += 1;
            }
            let n = p.chars().count();
            ranges.push(CharRange::new(pos, pos + n));
            text.push_str(p);
            pos += n;
        }
        Self::with_paragraph_ranges(doc_id.into(), text, ranges, scheme)
    }

    pub(crate) fn with_paragraph_ranges(
        doc_id: String,
        text: String,
        paragraphs: Vec<CharRange>,
        scheme: SchemeId,
    ) -> Self {
        let offsets = byte_offsets(&text);
        let mut sentences = Vec::new();
        for p in &paragraphs {
            let ptext = &text[offsets[p.start]..offsets[p.end]];
            for s in split_sentences(ptext) {
                sentences.push(CharRange::new(p.start + s.start, p.start + s.end));
            }
        }
        let words = whitespace_words(&text);
        AnnotatedDocument {
            doc_id,
            prompt: None,
            source_scheme: scheme,
            text,
            paragraphs,
            sentences,
            words,
            spans: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn unit_len(&self, unit: Unit) -> usize {
        match unit {
            Unit::Sentence => self.sentences.len(),
            Unit::Word => self.words.len(),
            Unit::Char => self.char_len(),
        }
    }

    pub fn slice(&self, range: CharRange) -> &str {
        let mut it = self
            .text
            .char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(self.text.len()));
        let start = it.nth(range.start).unwrap_or(self.text.len());
        let end = if range.end > range.start {
            it.nth(range.end - range.start - 1)
                .unwrap_or(self.text.len())
        } else {
            start
        };
        &self.text[start..end]
    }

    pub fn word_strs(&self) -> Vec<&str> {
        let off = byte_offsets(&self.text);
        self.words
            .iter()
            .map(|w| &self.text[off[w.start]..off[w.end]])
            .collect()
    }

    pub fn sentence_strs(&self) -> Vec<&str> {
        let off = byte_offsets(&self.text);
        self.sentences
            .iter()
            .map(|s| &self.text[off[s.start]..off[s.end]])
            .collect()
    }

    fn units_within(units: &[CharRange], outer: CharRange) -> Range<usize> {
        let lo = units.partition_point(|u| u.start < outer.start);
        let hi = units.partition_point(|u| u.start < outer.end);
        lo..hi
    }

    /// Word indices whose words start inside `range`.
    pub fn words_in(&self, range: CharRange) -> Range<usize> {
        Self::units_within(&self.words, range)
    }

    pub fn sentences_in(&self, range: CharRange) -> Range<usize> {
        Self::units_within(&self.sentences, range)
    }

    pub fn paragraph_of_char(&self, pos: usize) -> Option<usize> {
        let i = self.paragraphs.partition_point(|p| p.end <= pos);
        (i < self.paragraphs.len() && self.paragraphs[i].start <= pos).then_some(i)
    }

    /// Char range of a span regardless of its unit.
    pub fn span_chars(&self, span: &AnnotationSpan) -> Option<CharRange> {
        let units = match span.unit {
            Unit::Char => return Some(CharRange::new(span.start, span.end)),
            Unit::Sentence => &self.sentences,
            Unit::Word => &self.words,
        };
        if span.start >= span.end || span.end > units.len() {
            return None;
        }
        Some(CharRange::new(
            units[span.start].start,
            units[span.end - 1].end,
        ))
    }

    pub fn span(&self, span_id: &str) -> Option<&AnnotationSpan> {
        self.spans.iter().find(|s| s.span_id == span_id)
    }

    /// The rater whose spans label this document by default.
    pub fn preferred_rater(&self) -> Option<Rater> {
        self.spans.iter().map(|s| s.rater).min()
    }

    pub fn raters(&self) -> Vec<Rater> {
        let mut r: Vec<_> = self.spans.iter().map(|s| s.rater).collect();
        r.sort();
        r.dedup();
        r
    }

    /// Spans from `rater`, or from the preferred rater when `None`.
    pub fn spans_of(&self, rater: Option<Rater>) -> impl Iterator<Item = &AnnotationSpan> {
        let r = rater.or_else(|| self.preferred_rater());
        self.spans.iter().filter(move |s| Some(s.rater) == r)
    }

    fn unit_labels(&self, unit: Unit, rater: Option<Rater>) -> Vec<Option<TagId>> {
        let mut out = vec![None; self.unit_len(unit)];
        for s in self.spans_of(rater).filter(|s| s.unit == unit) {
            for slot in out.iter_mut().take(s.end).skip(s.start) {
                if slot.is_none() {
                    *slot = Some(s.tag.clone());
                }
            }
        }
        out
    }

    /// One optional tag per sentence from sentence-unit spans.
    pub fn sentence_labels(&self, rater: Option<Rater>) -> Vec<Option<TagId>> {
        self.unit_labels(Unit::Sentence, rater)
    }

    /// One optional tag per word from word-range spans.
    pub fn word_labels(&self, rater: Option<Rater>) -> Vec<Option<TagId>> {
        self.unit_labels(Unit::Word, rater)
    }

    pub fn word_tags(&self, rater: Option<Rater>, default: &TagId) -> Vec<TagId> {
        self.word_labels(rater)
            .into_iter()
            .map(|t| t.unwrap_or_else(|| default.clone()))
            .collect()
    }

    pub fn sentence_tags(&self, rater: Option<Rater>, default: &TagId) -> Vec<TagId> {
        self.sentence_labels(rater)
            .into_iter()
            .map(|t| t.unwrap_or_else(|| default.clone()))
            .collect()
    }

    /// Components (char-range spans) ordered by position.
    pub fn components(&self) -> Vec<&AnnotationSpan> {
        let mut c: Vec<_> = self.spans.iter().filter(|s| s.unit == Unit::Char).collect();
        c.sort_by_key(|a| (a.start, a.end));
        c
    }

    /// Check the structural invariants of the model.
    pub fn check_invariants(&self) -> Result<()> {
        let chars: Vec<char> = self.text.chars().collect();
        let n = chars.len();
        let ordered = |rs: &[CharRange], what: &str| -> Result<()> {
            for w in rs.windows(2) {
                if w[0].end > w[1].start {
                    return Err(Error::Consistency(format!(
                        "{}: {what} ranges overlap",
                        self.doc_id
                    )));
                }
            }
            for r in rs {
                if r.start >= r.end || r.end > n {
                    return Err(Error::range(format!(
                        "{}: bad {what} range {r:?}",
                        self.doc_id
                    )));
                }
            }
            Ok(())
        };
        ordered(&self.paragraphs, "paragraph")?;
        ordered(&self.sentences, "sentence")?;
        ordered(&self.words, "word")?;
        let mut covered = vec![false; n];
        for p in &self.paragraphs {
            covered[p.start..p.end].iter_mut().for_each(|c| *c = true);
        }
        if let Some(i) = (0..n).find(|&i| !covered[i] && !is_space(chars[i])) {
            return Err(Error::Consistency(format!(
                "{}: char {i} outside every paragraph",
                self.doc_id
            )));
        }
        for s in &self.sentences {
            if self.paragraphs.iter().filter(|p| p.contains(s)).count() != 1 {
                return Err(Error::Consistency(format!(
                    "{}: sentence {s:?} not inside exactly one paragraph",
                    self.doc_id
                )));
            }
        }
        for w in &self.words {
            if chars[w.start..w.end].iter().any(|&c| is_space(c)) {
                return Err(Error::Consistency(format!(
                    "{}: word {w:?} has whitespace",
                    self.doc_id
                )));
            }
        }
        for s in &self.spans {
            if s.start >= s.end || s.end > self.unit_len(s.unit) {
                return Err(Error::range(format!(
                    "{}: span {} outside the document",
                    self.doc_id, s.span_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusIndex {
    format: String,
    documents: BTreeMap<String, String>,
}

const INDEX_FILE: &str = "index.json";

fn file_stem_for(doc_id: &str) -> String {
    doc_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write documents as one JSON file each plus an index.
pub fn write_corpus(dir: &Path, docs: &[AnnotatedDocument]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = CorpusIndex {
        format: "argannot-corpus/1".into(),
        documents: BTreeMap::new(),
    };
    for doc in docs {
        let mut name = format!("{}.json", file_stem_for(&doc.doc_id));
        let mut k = 1;
        while index.documents.values().any(|v| v == &name) {
            name = format!("{}-{k}.json", file_stem_for(&doc.doc_id));
            k += 1;
        }
        if index
            .documents
            .insert(doc.doc_id.clone(), name.clone())
            .is_some()
        {
            return Err(Error::usage(format!(
                "duplicate document id `{}`",
                doc.doc_id
            )));
        }
        let path = dir.join(&name);
        fs::write(&path, doc.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(INDEX_FILE);
    let body = serde_json::to_string_pretty(&index)? + "\n";
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Read a corpus written by [`write_corpus`], in document-id order.
pub fn read_corpus(dir: &Path) -> Result<Vec<AnnotatedDocument>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: CorpusIndex = serde_json::from_str(&text)?;
    index
        .documents
        .values()
        .map(|file| {
            let p = dir.join(file);
            let body = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            AnnotatedDocument::from_json(&body)
        })
        .collect()
}
