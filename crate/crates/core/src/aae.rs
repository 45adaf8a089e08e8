//! Word-level views of AAE char-range components: projection, BIO labels,
//! relation candidates and stance items.

use std::ops::Range;

use crate::document::{AnnotatedDocument, CharRange, RelationKind, Stance};
use crate::schemes::TagId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub span_id: String,
    pub tag: TagId,
    pub chars: CharRange,
    pub words: Range<usize>,
    pub paragraph: usize,
}

/// Project char-range components onto words. A word belongs to a
/// component when more than half of its chars fall inside it. Components
/// that cover no word after projection are dropped with a warning.
pub fn project_components(doc: &AnnotatedDocument) -> Vec<Component> {
    let mut out = Vec::new();
    for span in doc.components() {
        let chars = CharRange::new(span.start, span.end);
        let lo = doc.words.partition_point(|w| w.end <= chars.start);
        let mut first = None;
        let mut last = 0;
        for (i, w) in doc.words.iter().enumerate().skip(lo) {
            if w.start >= chars.end {
                break;
            }
            let ov = w.overlap(&chars);
            if 2 * ov > w.len() {
                first.get_or_insert(i);
                last = i + 1;
            } else if ov > 0 {
                log::warn!(
                    "{}: {} boundary falls inside word {i}, assigned by majority overlap",
                    doc.doc_id,
                    span.span_id
                );
            }
        }
        let Some(first) = first else {
            log::warn!(
                "{}: {} covers no whole word, skipped",
                doc.doc_id,
                span.span_id
            );
            continue;
        };
        out.push(Component {
            span_id: span.span_id.clone(),
            tag: span.tag.clone(),
            chars,
            words: first..last,
            paragraph: doc.paragraph_of_char(chars.start).unwrap_or(0),
        });
    }
    out
}

/// B/I/O label per word from projected components.
pub fn bio_labels(word_count: usize, components: &[Component]) -> Vec<TagId> {
    let mut out = vec![TagId::from("O"); word_count];
    for c in components {
        for (k, slot) in out[c.words.clone()].iter_mut().enumerate() {
            *slot = TagId::from(if k == 0 { "B" } else { "I" });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationCandidate {
    pub source: usize,
    pub target: usize,
    pub linked: bool,
}

/// Every ordered pair of distinct components sharing a paragraph, with
/// `source`/`target` indexing into `components`.
pub fn relation_candidates(
    doc: &AnnotatedDocument,
    components: &[Component],
) -> Vec<RelationCandidate> {
    let mut out = Vec::new();
    for (i, a) in components.iter().enumerate() {
        for (j, b) in components.iter().enumerate() {
            if i == j || a.paragraph != b.paragraph {
                continue;
            }
            let linked = doc.relations.iter().any(|r| {
                r.kind == RelationKind::Link
                    && r.linked
                    && r.source == a.span_id
                    && r.target == b.span_id
            });
            out.push(RelationCandidate {
                source: i,
                target: j,
                linked,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StanceItem {
    /// A linked pair inside one paragraph.
    Pair {
        source: usize,
        target: usize,
        stance: Stance,
    },
    /// A claim judged against every major claim of the essay.
    Claim {
        claim: usize,
        major_claims: Vec<usize>,
        stance: Stance,
    },
}

impl StanceItem {
    pub fn stance(&self) -> Stance {
        match self {
            StanceItem::Pair { stance, .. } | StanceItem::Claim { stance, .. } => *stance,
        }
    }
}

/// Stance examples: one per linked relation, one per claim with a stance
/// attribute. Claims in essays without a major claim are skipped.
pub fn stance_items(doc: &AnnotatedDocument, components: &[Component]) -> Vec<StanceItem> {
    let index = |id: &str| components.iter().position(|c| c.span_id == id);
    let majors: Vec<usize> = components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.tag.as_str() == "MC")
        .map(|(i, _)| i)
        .collect();
    let mut out = Vec::new();
    for r in &doc.relations {
        if r.stance == Stance::None {
            continue;
        }
        match r.kind {
            RelationKind::Link => {
                if let (Some(s), Some(t)) = (index(&r.source), index(&r.target)) {
                    out.push(StanceItem::Pair {
                        source: s,
                        target: t,
                        stance: r.stance,
                    });
                }
            }
            RelationKind::ClaimStance => {
                let Some(c) = index(&r.source) else { continue };
                if majors.is_empty() {
                    log::warn!(
                        "{}: claim {} has no major claim to pair with, skipped",
                        doc.doc_id,
                        r.source
                    );
                    continue;
                }
                out.push(StanceItem::Claim {
                    claim: c,
                    major_claims: majors.clone(),
                    stance: r.stance,
                });
            }
        }
    }
    out
}
