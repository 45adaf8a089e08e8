//! Tag distributions at each scheme's native unit.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::aae::{bio_labels, project_components, relation_candidates, stance_items};
use crate::document::{AnnotatedDocument, Stance};
use crate::error::{Error, Result};
use crate::schemes::{SchemeId, TagId, TagSet};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatRow {
    pub tag: String,
    pub count: u64,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatGroup {
    pub name: String,
    pub unit: String,
    pub rows: Vec<StatRow>,
    pub total: u64,
}

impl StatGroup {
    fn from_counts(
        name: &str,
        unit: &str,
        order: &[String],
        counts: &BTreeMap<String, u64>,
    ) -> StatGroup {
        let total: u64 = counts.values().sum();
        let mut rows: Vec<StatRow> = order
            .iter()
            .map(|t| (t.clone(), counts.get(t).copied().unwrap_or(0)))
            .chain(
                counts
                    .iter()
                    .filter(|(t, _)| !order.contains(t))
                    .map(|(t, c)| (t.clone(), *c)),
            )
            .map(|(tag, count)| StatRow {
                tag,
                count,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                },
            })
            .collect();
        rows.retain(|r| order.contains(&r.tag) || r.count > 0);
        StatGroup {
            name: name.to_string(),
            unit: unit.to_string(),
            rows,
            total,
        }
    }

    pub fn count(&self, tag: &str) -> u64 {
        self.rows
            .iter()
            .find(|r| r.tag == tag)
            .map_or(0, |r| r.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub scheme: Option<SchemeId>,
    pub documents: usize,
    pub groups: Vec<StatGroup>,
}

impl CorpusStats {
    pub fn group(&self, name: &str) -> Option<&StatGroup> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// `1234567` as `1,234,567`.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scheme = self.scheme.map_or("(empty)", |s| s.as_str());
        writeln!(f, "{scheme}: {} documents", self.documents)?;
        for g in &self.groups {
            writeln!(f, "{} ({})", g.name, g.unit)?;
            writeln!(f, "{:<12} {:>10} {:>8}", "Tag", "Count", "%")?;
            for r in &g.rows {
                writeln!(
                    f,
                    "{:<12} {:>10} {:>7.1}%",
                    r.tag,
                    group_thousands(r.count),
                    r.percent
                )?;
            }
            writeln!(f, "{:<12} {:>10}", "Total", group_thousands(g.total))?;
        }
        Ok(())
    }
}

fn family(s: SchemeId) -> SchemeId {
    if s.is_aae() {
        SchemeId::AaeComponent
    } else {
        s
    }
}

fn tally(counts: &mut BTreeMap<String, u64>, tags: impl IntoIterator<Item = TagId>) {
    for t in tags {
        *counts.entry(t.to_string()).or_default() += 1;
    }
}

fn order_of(scheme: SchemeId) -> Vec<String> {
    TagSet::builtin(scheme)
        .labels()
        .iter()
        .map(|t| t.to_string())
        .collect()
}

/// Per-tag counts and percentages. ARROW counts sentences, PERSUADE words;
/// AAE reports BIO word tags, components, relation candidates and stances.
pub fn corpus_stats(corpus: &[AnnotatedDocument]) -> Result<CorpusStats> {
    let Some(first) = corpus.first() else {
        return Ok(CorpusStats {
            scheme: None,
            documents: 0,
            groups: Vec::new(),
        });
    };
    let scheme = family(first.source_scheme);
    if let Some(other) = corpus.iter().find(|d| family(d.source_scheme) != scheme) {
        return Err(Error::usage(format!(
            "mixed schemes: `{}` is {} but `{}` is {}",
            first.doc_id, first.source_scheme, other.doc_id, other.source_scheme
        )));
    }
    let groups = match scheme {
        SchemeId::Arrow => {
            let mut counts = BTreeMap::new();
            for d in corpus {
                tally(&mut counts, d.sentence_tags(None, &TagId::none()));
            }
            vec![StatGroup::from_counts(
                "Tags",
                "sentences",
                &order_of(SchemeId::Arrow),
                &counts,
            )]
        }
        SchemeId::Persuade => {
            let mut counts = BTreeMap::new();
            for d in corpus {
                tally(&mut counts, d.word_tags(None, &TagId::none()));
            }
            vec![StatGroup::from_counts(
                "Tags",
                "words",
                &order_of(SchemeId::Persuade),
                &counts,
            )]
        }
        _ => {
            let (mut bio, mut comp, mut rel, mut stance) = (
                BTreeMap::new(),
                BTreeMap::new(),
                BTreeMap::new(),
                BTreeMap::new(),
            );
            for d in corpus {
                let comps = project_components(d);
                tally(&mut bio, bio_labels(d.words.len(), &comps));
                tally(&mut comp, comps.iter().map(|c| c.tag.clone()));
                tally(
                    &mut rel,
                    relation_candidates(d, &comps)
                        .iter()
                        .map(|c| TagId::from(if c.linked { "Linked" } else { "NotLinked" })),
                );
                tally(
                    &mut stance,
                    stance_items(d, &comps).iter().map(|s| {
                        TagId::from(if s.stance() == Stance::Attack {
                            "Attack"
                        } else {
                            "Support"
                        })
                    }),
                );
            }
            vec![
                StatGroup::from_counts("IOB", "words", &order_of(SchemeId::AaeBio), &bio),
                StatGroup::from_counts(
                    "Component",
                    "components",
                    &order_of(SchemeId::AaeComponent),
                    &comp,
                ),
                StatGroup::from_counts(
                    "Relation",
                    "pairs",
                    &["Linked".into(), "NotLinked".into()],
                    &rel,
                ),
                StatGroup::from_counts(
                    "Stance",
                    "relations",
                    &order_of(SchemeId::AaeStance),
                    &stance,
                ),
            ]
        }
    };
    Ok(CorpusStats {
        scheme: Some(scheme),
        documents: corpus.len(),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{AnnotationSpan, Rater, Unit};

    #[test]
    fn empty_corpus() {
        let s = corpus_stats(&[]).unwrap();
        assert!(s.groups.is_empty() && s.documents == 0);
    }

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(4823), "4,823");
        assert_eq!(group_thousands(256108), "256,108");
        assert_eq!(group_thousands(1000000), "1,000,000");
    }

    #[test]
    fn arrow_sentences_sum_to_hundred() {
        let mut d = AnnotatedDocument::from_text("a", "One. Two. Three. Four.", SchemeId::Arrow);
        d.spans.push(AnnotationSpan {
            span_id: "s".into(),
            tag: "E1".into(),
            unit: Unit::Sentence,
            start: 0,
            end: 3,
            rater: Rater::Resolved,
        });
        let s = corpus_stats(&[d]).unwrap();
        let g = &s.groups[0];
        assert_eq!((g.count("E1"), g.count("None"), g.total), (3, 1, 4));
        let sum: f64 = g.rows.iter().map(|r| r.percent).sum();
        assert!((sum - 100.0).abs() < 1e-9);
        assert!(s.to_string().contains("E1"));
    }

    #[test]
    fn mixed_schemes_rejected() {
        let a = AnnotatedDocument::from_text("a", "x", SchemeId::Arrow);
        let b = AnnotatedDocument::from_text("b", "y", SchemeId::Persuade);
        assert!(matches!(corpus_stats(&[a, b]), Err(Error::Usage(_))));
    }
}
