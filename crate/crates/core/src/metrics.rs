//! Per-tag agreement and accuracy: one-vs-rest Cohen's kappa, precision,
//! recall, F1, and their macro averages.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aae::{bio_labels, project_components, relation_candidates, stance_items, StanceItem};
use crate::document::{AnnotatedDocument, RelationKind, Stance};
use crate::error::{Error, Result};
use crate::schemes::{SchemeId, TagId, TagSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    SumKappa,
    MacroF1,
}

impl std::str::FromStr for StopMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_kappa" => Ok(StopMetric::SumKappa),
            "macro_f1" => Ok(StopMetric::MacroF1),
            other => Err(Error::config(format!("unknown stop metric `{other}`"))),
        }
    }
}

impl fmt::Display for StopMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopMetric::SumKappa => "sum_kappa",
            StopMetric::MacroF1 => "macro_f1",
        })
    }
}

fn same_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "label sequences differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Kappa from the cells of a 2x2 indicator table:
/// `both`, `only_a`, `only_b`, `neither`.
pub fn kappa_from_table(both: u64, only_a: u64, only_b: u64, neither: u64) -> f64 {
    let n = (both + only_a + only_b + neither) as f64;
    let po = (both + neither) as f64 / n;
    let pa = (both + only_a) as f64 / n;
    let pb = (both + only_b) as f64 / n;
    let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
    if pe >= 1.0 {
        return if only_a + only_b == 0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

/// Cohen's kappa on the indicator "unit carries `tag`".
pub fn cohen_kappa(labels_a: &[TagId], labels_b: &[TagId], tag: &TagId) -> Result<f64> {
    same_len(labels_a, labels_b)?;
    if labels_a.is_empty() {
        return Err(Error::usage("kappa of empty label sequences"));
    }
    let (mut both, mut only_a, mut only_b, mut neither) = (0, 0, 0, 0);
    for (a, b) in labels_a.iter().zip(labels_b) {
        match (a == tag, b == tag) {
            (true, true) => both += 1,
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            (false, false) => neither += 1,
        }
    }
    Ok(kappa_from_table(both, only_a, only_b, neither))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Prf {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

pub fn prf1(pred: &[TagId], gold: &[TagId], tag: &TagId) -> Result<Prf> {
    same_len(pred, gold)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        match (p == tag, g == tag) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TagMetrics {
    pub tag: TagId,
    pub kappa: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold units carrying the tag.
    pub support: u64,
    pub predicted: u64,
}

impl TagMetrics {
    /// Tags absent from both sides do not enter averages.
    pub fn is_populated(&self) -> bool {
        self.support > 0 || self.predicted > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub scheme: String,
    pub unit: String,
    pub units: usize,
    pub per_tag: Vec<TagMetrics>,
    pub macro_f1: f64,
    pub mean_kappa: f64,
    pub micro_accuracy: f64,
    pub kappa_sum: f64,
    pub f1_sum: f64,
}

impl EvalReport {
    pub fn metric_sum(&self, metric: StopMetric) -> f64 {
        match metric {
            StopMetric::SumKappa => self.kappa_sum,
            StopMetric::MacroF1 => self.f1_sum,
        }
    }

    pub fn tag(&self, tag: &str) -> Option<&TagMetrics> {
        self.per_tag.iter().find(|t| t.tag.as_str() == tag)
    }

    /// Per-tag rows followed by an average row.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} ({} {})\n{:<10} {:>7} {:>9} {:>7} {:>7} {:>9}\n",
            self.scheme,
            self.units,
            self.unit,
            "Tag",
            "Kappa",
            "Precision",
            "Recall",
            "F1",
            "Support"
        );
        for t in &self.per_tag {
            s.push_str(&format!(
                "{:<10} {:>7.3} {:>9.3} {:>7.3} {:>7.3} {:>9}\n",
                t.tag.as_str(),
                t.kappa,
                t.precision,
                t.recall,
                t.f1,
                t.support
            ));
        }
        let pop: Vec<&TagMetrics> = self.per_tag.iter().filter(|t| t.is_populated()).collect();
        let mean = |f: fn(&TagMetrics) -> f64| {
            if pop.is_empty() {
                0.0
            } else {
                pop.iter().map(|t| f(t)).sum::<f64>() / pop.len() as f64
            }
        };
        s.push_str(&format!(
            "{:<10} {:>7.3} {:>9.3} {:>7.3} {:>7.3} {:>9}\n",
            "Avg",
            self.mean_kappa,
            mean(|t| t.precision),
            mean(|t| t.recall),
            self.macro_f1,
            self.units
        ));
        s.push_str(&format!("Accuracy {:.3}\n", self.micro_accuracy));
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Metrics over two aligned tag sequences, for the scheme's scored tags.
pub fn report_from_tags(
    pred: &[TagId],
    gold: &[TagId],
    scheme: &TagSet,
    unit: &str,
) -> Result<EvalReport> {
    same_len(pred, gold)?;
    let n = gold.len();
    let mut per_tag = Vec::new();
    for tag in scheme.scored_tags() {
        let p = prf1(pred, gold, &tag)?;
        let kappa = if n == 0 {
            0.0
        } else {
            cohen_kappa(pred, gold, &tag)?
        };
        per_tag.push(TagMetrics {
            tag,
            kappa,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            support: p.tp + p.fn_,
            predicted: p.tp + p.fp,
        });
    }
    let pop: Vec<&TagMetrics> = per_tag.iter().filter(|t| t.is_populated()).collect();
    let f1_sum: f64 = pop.iter().map(|t| t.f1).sum();
    let kappa_sum: f64 = pop.iter().map(|t| t.kappa).sum();
    let k = pop.len().max(1) as f64;
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(EvalReport {
        scheme: scheme.name.clone(),
        unit: unit.to_string(),
        units: n,
        macro_f1: if pop.is_empty() { 0.0 } else { f1_sum / k },
        mean_kappa: if pop.is_empty() { 0.0 } else { kappa_sum / k },
        micro_accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        kappa_sum,
        f1_sum,
        per_tag,
    })
}

/// Per-word component class, `None` outside components.
pub fn component_word_tags(doc: &AnnotatedDocument) -> Vec<TagId> {
    let mut out = vec![TagId::none(); doc.words.len()];
    for c in project_components(doc) {
        for slot in &mut out[c.words.clone()] {
            *slot = c.tag.clone();
        }
    }
    out
}

/// Labels of `doc` at the native unit of `scheme`, enumerated from the
/// structure of `reference` (the gold document) for pair-level schemes.
pub fn native_labels(
    doc: &AnnotatedDocument,
    reference: &AnnotatedDocument,
    scheme: SchemeId,
) -> Vec<TagId> {
    match scheme {
        SchemeId::Arrow => doc.sentence_tags(None, &TagId::none()),
        SchemeId::Persuade => doc.word_tags(None, &TagId::none()),
        SchemeId::AaeBio => bio_labels(doc.words.len(), &project_components(doc)),
        SchemeId::AaeComponent => component_word_tags(doc),
        SchemeId::AaeRelation => {
            let comps = project_components(reference);
            relation_candidates(reference, &comps)
                .iter()
                .map(|c| {
                    let (s, t) = (&comps[c.source].span_id, &comps[c.target].span_id);
                    let linked = doc.relations.iter().any(|r| {
                        r.kind == RelationKind::Link && r.linked && &r.source == s && &r.target == t
                    });
                    TagId::from(if linked { "Linked" } else { "NotLinked" })
                })
                .collect()
        }
        SchemeId::AaeStance => {
            let comps = project_components(reference);
            stance_items(reference, &comps)
                .iter()
                .map(|item| {
                    let (kind, source, target) = match item {
                        StanceItem::Pair { source, target, .. } => (
                            RelationKind::Link,
                            comps[*source].span_id.clone(),
                            Some(comps[*target].span_id.clone()),
                        ),
                        StanceItem::Claim { claim, .. } => (
                            RelationKind::ClaimStance,
                            comps[*claim].span_id.clone(),
                            None,
                        ),
                    };
                    let stance = doc
                        .relations
                        .iter()
                        .find(|r| {
                            r.kind == kind
                                && r.source == source
                                && target.as_ref().is_none_or(|t| &r.target == t)
                        })
                        .map_or(Stance::Support, |r| r.stance);
                    TagId::from(if stance == Stance::Attack {
                        "Attack"
                    } else {
                        "Support"
                    })
                })
                .collect()
        }
    }
}

fn unit_name(scheme: SchemeId) -> &'static str {
    match scheme {
        SchemeId::Arrow => "sentences",
        SchemeId::AaeRelation | SchemeId::AaeStance => "pairs",
        _ => "words",
    }
}

/// Flatten every unit of the corpus into one sequence per side and score.
pub fn evaluate(
    pred: &[AnnotatedDocument],
    gold: &[AnnotatedDocument],
    scheme: &TagSet,
) -> Result<EvalReport> {
    let pred_by_id: HashMap<&str, &AnnotatedDocument> =
        pred.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let gold_ids: BTreeMap<&str, ()> = gold.iter().map(|d| (d.doc_id.as_str(), ())).collect();
    let missing_pred: Vec<&str> = gold_ids
        .keys()
        .filter(|id| !pred_by_id.contains_key(*id))
        .copied()
        .collect();
    let missing_gold: Vec<&str> = pred
        .iter()
        .map(|d| d.doc_id.as_str())
        .filter(|id| !gold_ids.contains_key(id))
        .collect();
    if !missing_pred.is_empty() || !missing_gold.is_empty() {
        return Err(Error::usage(format!(
            "document ids differ; missing predictions: [{}]; missing gold: [{}]",
            missing_pred.join(", "),
            missing_gold.join(", ")
        )));
    }
    let mut p_all = Vec::new();
    let mut g_all = Vec::new();
    for g in gold {
        let p = pred_by_id[g.doc_id.as_str()];
        let gl = native_labels(g, g, scheme.scheme);
        let pl = native_labels(p, g, scheme.scheme);
        if gl.len() != pl.len() {
            return Err(Error::usage(format!(
                "`{}`: {} predicted units vs {} gold units",
                g.doc_id,
                pl.len(),
                gl.len()
            )));
        }
        p_all.extend(pl);
        g_all.extend(gl);
    }
    report_from_tags(&p_all, &g_all, scheme, unit_name(scheme.scheme))
}
