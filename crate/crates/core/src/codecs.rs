//! Model inputs and targets for the six tasks, and decoding of predictions
//! back into annotations.
//!
//! Layouts (one `<sep>` between paragraphs, targets `-` are ignored):
//!
//! ```text
//! ARROW      <mask> s1 <mask> s2 <sep> <mask> s3 <sep> <cls>
//! PERSUADE   w1 w2 <sep> w3 <sep> <cls>        (target at each first subword)
//! relation   ... <sep> <Source> : c1 <sep> ... <sep> <Target> : c2 <sep> ... <cls> <sep>
//! ```

use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aae::{
    bio_labels, project_components, relation_candidates, stance_items, Component, StanceItem,
};
use crate::document::{
    AnnotatedDocument, AnnotationSpan, ArgRelation, Rater, RelationKind, Stance, Unit,
};
use crate::error::{Error, Result};
use crate::schemes::{orphan_inside, SchemeId, TagId, TagSet};
use crate::tokenizer::Vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ArrowSentence,
    PersuadeWord,
    AaeBio,
    AaeComponent,
    AaeRelation,
    AaeStance,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::ArrowSentence,
        Task::PersuadeWord,
        Task::AaeBio,
        Task::AaeComponent,
        Task::AaeRelation,
        Task::AaeStance,
    ];

    pub fn scheme(self) -> SchemeId {
        match self {
            Task::ArrowSentence => SchemeId::Arrow,
            Task::PersuadeWord => SchemeId::Persuade,
            Task::AaeBio => SchemeId::AaeBio,
            Task::AaeComponent => SchemeId::AaeComponent,
            Task::AaeRelation => SchemeId::AaeRelation,
            Task::AaeStance => SchemeId::AaeStance,
        }
    }

    pub fn tagset(self) -> TagSet {
        TagSet::builtin(self.scheme())
    }

    /// Whether the task reads one label from the sequence head.
    pub fn is_sequence(self) -> bool {
        matches!(self, Task::AaeRelation | Task::AaeStance)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::ArrowSentence => "arrow_sentence",
            Task::PersuadeWord => "persuade_word",
            Task::AaeBio => "aae_bio",
            Task::AaeComponent => "aae_component",
            Task::AaeRelation => "aae_relation",
            Task::AaeStance => "aae_stance",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Task> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "arrow_sentence" | "arrow" => Task::ArrowSentence,
            "persuade_word" | "persuade" => Task::PersuadeWord,
            "aae_bio" | "bio" => Task::AaeBio,
            "aae_component" | "component" => Task::AaeComponent,
            "aae_relation" | "relation" => Task::AaeRelation,
            "aae_stance" | "stance" => Task::AaeStance,
            _ => return Err(Error::usage(format!("unknown task `{s}`"))),
        })
    }
}

/// How component classes are read off word-level predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentStrategy {
    /// Every word of a block is labeled; the block takes the most frequent
    /// prediction.
    #[default]
    BlockMajority,
    /// Only the first word of a block is labeled and decides the block.
    BeginOnly,
}

/// What a pair-level example refers to, for decoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairRef {
    Link {
        source: String,
        target: String,
    },
    ClaimStance {
        claim: String,
        major_claims: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub doc_id: String,
    pub task: Task,
    pub input_ids: Vec<usize>,
    /// Label id per position; `None` is the ignore marker.
    pub targets: Vec<Option<usize>>,
    pub labeled: Vec<usize>,
    /// Component blocks as ranges into `labeled` (component task only).
    #[serde(default)]
    pub blocks: Vec<Range<usize>>,
    #[serde(default)]
    pub pair: Option<PairRef>,
}

impl EncodedExample {
    fn new(doc_id: &str, task: Task) -> Self {
        EncodedExample {
            doc_id: doc_id.to_string(),
            task,
            input_ids: Vec::new(),
            targets: Vec::new(),
            labeled: Vec::new(),
            blocks: Vec::new(),
            pair: None,
        }
    }

    fn push(&mut self, id: usize, target: Option<usize>) {
        if target.is_some() {
            self.labeled.push(self.input_ids.len());
        }
        self.input_ids.push(id);
        self.targets.push(target);
    }

    fn push_all(&mut self, ids: &[usize]) {
        for &id in ids {
            self.push(id, None);
        }
    }

    /// Gold label ids at the labeled positions.
    pub fn gold(&self) -> Vec<usize> {
        self.labeled
            .iter()
            .map(|&p| self.targets[p].expect("labeled"))
            .collect()
    }

    /// Keep the first `max_tokens` positions.
    pub fn truncated(&self, max_tokens: usize) -> EncodedExample {
        if self.input_ids.len() <= max_tokens {
            return self.clone();
        }
        let labeled: Vec<usize> = self
            .labeled
            .iter()
            .copied()
            .filter(|&p| p < max_tokens)
            .collect();
        let kept = labeled.len();
        EncodedExample {
            doc_id: self.doc_id.clone(),
            task: self.task,
            input_ids: self.input_ids[..max_tokens].to_vec(),
            targets: self.targets[..max_tokens].to_vec(),
            labeled,
            blocks: self
                .blocks
                .iter()
                .filter(|b| b.start < kept)
                .map(|b| b.start..b.end.min(kept))
                .collect(),
            pair: self.pair.clone(),
        }
    }

    /// Three aligned rows: tokens, targets, positions.
    pub fn dump(&self, vocab: &Vocab, tagset: &TagSet) -> String {
        let toks: Vec<String> = self
            .input_ids
            .iter()
            .map(|&i| vocab.piece(i).unwrap_or("<?>").to_string())
            .collect();
        let tgts: Vec<String> = self
            .targets
            .iter()
            .map(|t| {
                t.and_then(|l| tagset.label(l))
                    .map_or("-".to_string(), |t| t.to_string())
            })
            .collect();
        let mut rows = [String::new(), String::new(), String::new()];
        for (i, (a, b)) in toks.iter().zip(&tgts).enumerate() {
            let pos = i.to_string();
            let w = a.chars().count().max(b.chars().count()).max(pos.len());
            let _ = write!(rows[0], "{a:<w$} ");
            let _ = write!(rows[1], "{b:<w$} ");
            let _ = write!(rows[2], "{pos:<w$} ");
        }
        rows.iter()
            .map(|r| r.trim_end().to_string() + "\n")
            .collect()
    }
}

fn label_of(tagset: &TagSet, tag: &TagId) -> Result<usize> {
    tagset
        .label_id(tag)
        .ok_or_else(|| Error::usage(format!("tag `{tag}` is not in scheme {}", tagset.name)))
}

fn tokens_for(doc: &AnnotatedDocument, words: Range<usize>, vocab: &Vocab) -> Vec<Vec<usize>> {
    let strs = doc.word_strs();
    words
        .map(|w| vocab.encode_words(&[strs[w]]).token_ids)
        .collect()
}

/// Sentence-level ARROW encoding: one `<mask>` per sentence.
pub fn encode_arrow(doc: &AnnotatedDocument, vocab: &Vocab) -> Result<EncodedExample> {
    let tagset = TagSet::builtin(SchemeId::Arrow);
    let tags = doc.sentence_tags(None, &tagset.untagged());
    let mut ex = EncodedExample::new(&doc.doc_id, Task::ArrowSentence);
    for (pi, p) in doc.paragraphs.iter().enumerate() {
        if pi > 0 {
            ex.push(Vocab::SEP, None);
        }
        for si in doc.sentences_in(*p) {
            ex.push(Vocab::MASK, Some(label_of(&tagset, &tags[si])?));
            for toks in tokens_for(doc, doc.words_in(doc.sentences[si]), vocab) {
                ex.push_all(&toks);
            }
        }
    }
    ex.push(Vocab::SEP, None);
    ex.push(Vocab::CLS, None);
    Ok(ex)
}

fn encode_word_labels(
    doc: &AnnotatedDocument,
    task: Task,
    labels: &[usize],
    vocab: &Vocab,
) -> EncodedExample {
    let mut ex = EncodedExample::new(&doc.doc_id, task);
    for (pi, p) in doc.paragraphs.iter().enumerate() {
        if pi > 0 {
            ex.push(Vocab::SEP, None);
        }
        let words = doc.words_in(*p);
        let start = words.start;
        for (k, toks) in tokens_for(doc, words, vocab).into_iter().enumerate() {
            ex.push(toks[0], Some(labels[start + k]));
            ex.push_all(&toks[1..]);
        }
    }
    ex.push(Vocab::SEP, None);
    ex.push(Vocab::CLS, None);
    ex
}

/// Word-level PERSUADE encoding; labels sit on each word's first subword.
pub fn encode_persuade(doc: &AnnotatedDocument, vocab: &Vocab) -> Result<EncodedExample> {
    let tagset = TagSet::builtin(SchemeId::Persuade);
    let labels = doc
        .word_tags(None, &tagset.untagged())
        .iter()
        .map(|t| label_of(&tagset, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(encode_word_labels(doc, Task::PersuadeWord, &labels, vocab))
}

/// Word-level B/I/O encoding of the document's char-range components.
pub fn encode_aae_bio(doc: &AnnotatedDocument, vocab: &Vocab) -> Result<EncodedExample> {
    let tagset = TagSet::builtin(SchemeId::AaeBio);
    let comps = project_components(doc);
    let labels = bio_labels(doc.words.len(), &comps)
        .iter()
        .map(|t| label_of(&tagset, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(encode_word_labels(doc, Task::AaeBio, &labels, vocab))
}

/// Component spans from B/I/O word labels. An `I` without a preceding `B`
/// or `I` opens a new component; the count of such orphans is returned.
pub fn decode_bio(labels: &[TagId]) -> (Vec<Range<usize>>, usize) {
    let orphans = orphan_inside(labels).len();
    if orphans > 0 {
        log::warn!("{orphans} inside tag(s) without an opening begin tag");
    }
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, l) in labels.iter().enumerate() {
        match l.as_str() {
            "B" => {
                if let Some(s) = open.take() {
                    out.push(s..i);
                }
                open = Some(i);
            }
            "I" => {
                open.get_or_insert(i);
            }
            _ => {
                if let Some(s) = open.take() {
                    out.push(s..i);
                }
            }
        }
    }
    if let Some(s) = open {
        out.push(s..labels.len());
    }
    (out, orphans)
}

/// Component classification: the words of each component carry its class;
/// words outside components are ignored.
pub fn encode_aae_component(
    doc: &AnnotatedDocument,
    components: &[Component],
    vocab: &Vocab,
    strategy: ComponentStrategy,
) -> Result<EncodedExample> {
    let tagset = TagSet::builtin(SchemeId::AaeComponent);
    let mut word_label: Vec<Option<(usize, usize)>> = vec![None; doc.words.len()];
    for (ci, c) in components.iter().enumerate() {
        let label = label_of(&tagset, &c.tag)?;
        for w in c.words.clone() {
            if strategy == ComponentStrategy::BeginOnly && w != c.words.start {
                continue;
            }
            word_label[w] = Some((ci, label));
        }
    }
    let mut ex = EncodedExample::new(&doc.doc_id, Task::AaeComponent);
    let mut block_of_labeled = Vec::new();
    for (pi, p) in doc.paragraphs.iter().enumerate() {
        if pi > 0 {
            ex.push(Vocab::SEP, None);
        }
        let words = doc.words_in(*p);
        let start = words.start;
        for (k, toks) in tokens_for(doc, words, vocab).into_iter().enumerate() {
            let wl = word_label[start + k];
            if let Some((ci, _)) = wl {
                block_of_labeled.push(ci);
            }
            ex.push(toks[0], wl.map(|(_, l)| l));
            ex.push_all(&toks[1..]);
        }
    }
    ex.push(Vocab::SEP, None);
    ex.push(Vocab::CLS, None);
    let mut at = 0;
    for ci in 0..components.len() {
        let n = block_of_labeled.iter().filter(|&&b| b == ci).count();
        ex.blocks.push(at..at + n);
        at += n;
    }
    Ok(ex)
}

/// Most frequent label in a block; ties go to the earlier label id
/// (`MC` before `Cl` before `Pr`).
pub fn majority_label(predictions: &[usize], num_labels: usize) -> Option<usize> {
    if predictions.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; num_labels];
    for &p in predictions {
        counts[p] += 1;
    }
    let best = *counts.iter().max().expect("non-empty");
    counts.iter().position(|&c| c == best)
}

/// One label per component block from predictions at the labeled positions.
pub fn decode_components(
    ex: &EncodedExample,
    predictions: &[usize],
    num_labels: usize,
) -> Vec<Option<usize>> {
    ex.blocks
        .iter()
        .map(|b| majority_label(&predictions[b.clone()], num_labels))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Source,
    Target,
}

fn encode_marked(
    doc: &AnnotatedDocument,
    task: Task,
    paragraphs: &[usize],
    marks: &[(Range<usize>, Mark)],
    label: usize,
    vocab: &Vocab,
) -> EncodedExample {
    let mut ex = EncodedExample::new(&doc.doc_id, task);
    for &pi in paragraphs {
        let words = doc.words_in(doc.paragraphs[pi]);
        let start = words.start;
        let toks = tokens_for(doc, words, vocab);
        for (k, t) in toks.iter().enumerate() {
            let w = start + k;
            if let Some((_, m)) = marks.iter().find(|(r, _)| r.start == w) {
                let marker = if *m == Mark::Source {
                    Vocab::SOURCE
                } else {
                    Vocab::TARGET
                };
                ex.push_all(&[Vocab::SEP, marker, vocab.colon()]);
            }
            ex.push_all(t);
            if marks.iter().any(|(r, _)| r.end == w + 1) {
                ex.push(Vocab::SEP, None);
            }
        }
    }
    ex.push(Vocab::CLS, Some(label));
    ex.push(Vocab::SEP, None);
    ex
}

fn overlapping(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Pair classification input for `source -> target` inside one paragraph.
pub fn encode_aae_relation(
    doc: &AnnotatedDocument,
    components: &[Component],
    source: usize,
    target: usize,
    linked: bool,
    vocab: &Vocab,
) -> Result<EncodedExample> {
    let (s, t) = (&components[source], &components[target]);
    if source == target || overlapping(&s.words, &t.words) {
        return Err(Error::usage(format!(
            "{}: source {} and target {} overlap",
            doc.doc_id, s.span_id, t.span_id
        )));
    }
    if s.paragraph != t.paragraph {
        return Err(Error::usage(format!(
            "{}: {} and {} are in different paragraphs",
            doc.doc_id, s.span_id, t.span_id
        )));
    }
    let tagset = TagSet::builtin(SchemeId::AaeRelation);
    let label = label_of(
        &tagset,
        &TagId::from(if linked { "Linked" } else { "NotLinked" }),
    )?;
    let mut ex = encode_marked(
        doc,
        Task::AaeRelation,
        &[s.paragraph],
        &[
            (s.words.clone(), Mark::Source),
            (t.words.clone(), Mark::Target),
        ],
        label,
        vocab,
    );
    ex.pair = Some(PairRef::Link {
        source: s.span_id.clone(),
        target: t.span_id.clone(),
    });
    Ok(ex)
}

/// Support/attack input for a linked pair, or for a claim together with
/// every paragraph holding a major claim.
pub fn encode_aae_stance(
    doc: &AnnotatedDocument,
    components: &[Component],
    item: &StanceItem,
    vocab: &Vocab,
) -> Result<EncodedExample> {
    let tagset = TagSet::builtin(SchemeId::AaeStance);
    let label = label_of(
        &tagset,
        &TagId::from(if item.stance() == Stance::Attack {
            "Attack"
        } else {
            "Support"
        }),
    )?;
    let ex = match item {
        StanceItem::Pair { source, target, .. } => {
            let mut ex = encode_aae_relation(doc, components, *source, *target, true, vocab)?;
            ex.task = Task::AaeStance;
            let cls = *ex.labeled.last().expect("class position");
            ex.targets[cls] = Some(label);
            ex
        }
        StanceItem::Claim {
            claim,
            major_claims,
            ..
        } => {
            let c = &components[*claim];
            let mut paragraphs: Vec<usize> = vec![c.paragraph];
            paragraphs.extend(major_claims.iter().map(|&m| components[m].paragraph));
            paragraphs.sort_unstable();
            paragraphs.dedup();
            let mut marks = vec![(c.words.clone(), Mark::Source)];
            marks.extend(
                major_claims
                    .iter()
                    .map(|&m| (components[m].words.clone(), Mark::Target)),
            );
            let mut ex = encode_marked(doc, Task::AaeStance, &paragraphs, &marks, label, vocab);
            ex.pair = Some(PairRef::ClaimStance {
                claim: c.span_id.clone(),
                major_claims: major_claims
                    .iter()
                    .map(|&m| components[m].span_id.clone())
                    .collect(),
            });
            ex
        }
    };
    Ok(ex)
}

/// All examples a document yields for a task.
pub fn encode_document(
    task: Task,
    doc: &AnnotatedDocument,
    vocab: &Vocab,
    strategy: ComponentStrategy,
) -> Result<Vec<EncodedExample>> {
    Ok(match task {
        Task::ArrowSentence => vec![encode_arrow(doc, vocab)?],
        Task::PersuadeWord => vec![encode_persuade(doc, vocab)?],
        Task::AaeBio => vec![encode_aae_bio(doc, vocab)?],
        Task::AaeComponent => {
            let comps = project_components(doc);
            vec![encode_aae_component(doc, &comps, vocab, strategy)?]
        }
        Task::AaeRelation => {
            let comps = project_components(doc);
            relation_candidates(doc, &comps)
                .iter()
                .map(|c| encode_aae_relation(doc, &comps, c.source, c.target, c.linked, vocab))
                .collect::<Result<_>>()?
        }
        Task::AaeStance => {
            let comps = project_components(doc);
            stance_items(doc, &comps)
                .iter()
                .map(|i| encode_aae_stance(doc, &comps, i, vocab))
                .collect::<Result<_>>()?
        }
    })
}

pub fn encode_corpus(
    task: Task,
    docs: &[AnnotatedDocument],
    vocab: &Vocab,
    strategy: ComponentStrategy,
) -> Result<Vec<EncodedExample>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(encode_document(task, d, vocab, strategy)?);
    }
    Ok(out)
}

fn merge_runs(tags: &[TagId], none: &TagId) -> Vec<(Range<usize>, TagId)> {
    let mut out: Vec<(Range<usize>, TagId)> = Vec::new();
    for (i, t) in tags.iter().enumerate() {
        if t == none {
            continue;
        }
        match out.last_mut() {
            Some((r, last)) if r.end == i && last == t => r.end = i + 1,
            _ => out.push((i..i + 1, t.clone())),
        }
    }
    out
}

/// Replace `rater`'s spans of `doc` by predictions for one task. `labels`
/// holds, per example from [`encode_document`], the predicted label id at
/// each labeled position.
pub fn apply_predictions(
    doc: &mut AnnotatedDocument,
    task: Task,
    examples: &[EncodedExample],
    labels: &[Vec<usize>],
    rater: Rater,
) -> Result<()> {
    let tagset = task.tagset();
    let tag = |id: usize| {
        tagset
            .label(id)
            .ok_or_else(|| Error::usage(format!("label id {id} outside scheme {}", tagset.name)))
    };
    if examples.len() != labels.len() {
        return Err(Error::usage("one prediction list per example is required"));
    }
    let prefix = format!("{}-", rater);
    match task {
        Task::ArrowSentence | Task::PersuadeWord | Task::AaeBio => {
            let [ex] = examples else {
                return Err(Error::usage(format!(
                    "{task} expects one example per document"
                )));
            };
            let pred = labels[0]
                .iter()
                .map(|&l| tag(l))
                .collect::<Result<Vec<_>>>()?;
            let (unit, n) = if task == Task::ArrowSentence {
                (Unit::Sentence, doc.sentences.len())
            } else {
                (Unit::Word, doc.words.len())
            };
            if pred.len() != n || ex.labeled.len() != n {
                return Err(Error::usage(format!(
                    "{}: {} predictions for {n} units",
                    doc.doc_id,
                    pred.len()
                )));
            }
            doc.spans.retain(|s| s.rater != rater);
            if task == Task::AaeBio {
                let (ranges, _) = decode_bio(&pred);
                for (k, r) in ranges.into_iter().enumerate() {
                    doc.spans.push(AnnotationSpan {
                        span_id: format!("{prefix}T{}", k + 1),
                        tag: TagId::from("Pr"),
                        unit: Unit::Char,
                        start: doc.words[r.start].start,
                        end: doc.words[r.end - 1].end,
                        rater,
                    });
                }
                return Ok(());
            }
            let runs = if unit == Unit::Sentence {
                pred.iter()
                    .enumerate()
                    .filter(|(_, t)| !t.is_none_tag())
                    .map(|(i, t)| (i..i + 1, t.clone()))
                    .collect()
            } else {
                merge_runs(&pred, &tagset.untagged())
            };
            for (k, (r, t)) in runs.into_iter().enumerate() {
                doc.spans.push(AnnotationSpan {
                    span_id: format!("{prefix}{}", k + 1),
                    tag: t,
                    unit,
                    start: r.start,
                    end: r.end,
                    rater,
                });
            }
        }
        Task::AaeComponent => {
            let [ex] = examples else {
                return Err(Error::usage(
                    "aae_component expects one example per document",
                ));
            };
            let comps = project_components(doc);
            let classes = decode_components(ex, &labels[0], tagset.num_labels());
            for (c, cls) in comps.iter().zip(classes) {
                if let Some(cls) = cls {
                    let t = tag(cls)?;
                    if let Some(s) = doc.spans.iter_mut().find(|s| s.span_id == c.span_id) {
                        s.tag = t;
                    }
                }
            }
        }
        Task::AaeRelation => {
            doc.relations.retain(|r| r.kind != RelationKind::Link);
            for (ex, l) in examples.iter().zip(labels) {
                let Some(PairRef::Link { source, target }) = &ex.pair else {
                    continue;
                };
                if l.first()
                    .map(|&x| tag(x))
                    .transpose()?
                    .is_some_and(|t| t.as_str() == "Linked")
                {
                    doc.relations.push(ArgRelation {
                        source: source.clone(),
                        target: target.clone(),
                        linked: true,
                        stance: Stance::Support,
                        kind: RelationKind::Link,
                    });
                }
            }
        }
        Task::AaeStance => {
            for (ex, l) in examples.iter().zip(labels) {
                let Some(&id) = l.first() else { continue };
                let stance = if tag(id)?.as_str() == "Attack" {
                    Stance::Attack
                } else {
                    Stance::Support
                };
                match &ex.pair {
                    Some(PairRef::Link { source, target }) => {
                        for r in doc.relations.iter_mut().filter(|r| {
                            r.kind == RelationKind::Link
                                && &r.source == source
                                && &r.target == target
                        }) {
                            r.stance = stance;
                        }
                    }
                    Some(PairRef::ClaimStance { claim, .. }) => {
                        for r in doc
                            .relations
                            .iter_mut()
                            .filter(|r| r.kind == RelationKind::ClaimStance && &r.source == claim)
                        {
                            r.stance = stance;
                        }
                    }
                    None => {}
                }
            }
        }
    }
    Ok(())
}
