//! Leave-prompt-out seed models, vote synthesis and universal retraining.
//!
//! Model `i` tests on prompt `i` and takes prompt `i+1 (mod k)` as its dev
//! set; every other prompt trains it. With `k = 1` the dev prompt is the
//! second prompt.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codecs::{encode_document, ComponentStrategy, EncodedExample, Task};
use crate::document::{AnnotatedDocument, AnnotationSpan, Rater, Unit};
use crate::encoder::{ModelConfig, Params};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::schemes::{resolve_votes, TagId};
use crate::tokenizer::Vocab;
use crate::training::{evaluate_examples, predict_all, train_split, TrainConfig, TrainOutcome};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSplit {
    pub model: usize,
    pub train: Vec<String>,
    pub dev: String,
    pub test: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub prompts: Vec<String>,
    pub models: Vec<ModelSplit>,
}

pub fn build_seed_plan(prompts: &[String], k: usize) -> Result<SeedPlan> {
    let distinct: BTreeSet<&String> = prompts.iter().collect();
    if distinct.len() != prompts.len() {
        return Err(Error::usage("prompt ids must be distinct"));
    }
    if k == 0 {
        return Err(Error::usage("ensemble size must be at least 1"));
    }
    if prompts.len() < 3 || k > prompts.len() {
        return Err(Error::usage(format!(
            "{} prompts cannot host {k} leave-prompt-out models (need at least 3 and at least k)",
            prompts.len()
        )));
    }
    let models = (0..k)
        .map(|i| {
            let dev = if k == 1 { 1 } else { (i + 1) % k };
            ModelSplit {
                model: i + 1,
                train: prompts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i && *j != dev)
                    .map(|(_, p)| p.clone())
                    .collect(),
                dev: prompts[dev].clone(),
                test: prompts[i].clone(),
            }
        })
        .collect();
    Ok(SeedPlan {
        prompts: prompts.to_vec(),
        models,
    })
}

impl SeedPlan {
    pub fn check(&self) -> Result<()> {
        for m in &self.models {
            if m.dev == m.test || m.train.iter().any(|p| *p == m.dev || *p == m.test) {
                return Err(Error::Consistency(format!(
                    "model {} trains on a held-out prompt",
                    m.model
                )));
            }
        }
        Ok(())
    }

    /// One line per model: `model<TAB>train prompts<TAB>dev<TAB>test`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("model\ttrain\tdev\ttest\n");
        for m in &self.models {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                m.model,
                m.train.join(","),
                m.dev,
                m.test
            );
        }
        s
    }
}

fn prompt_of(doc: &AnnotatedDocument) -> Result<&str> {
    doc.prompt
        .as_deref()
        .ok_or_else(|| Error::usage(format!("{} has no prompt id", doc.doc_id)))
}

/// Documents of a corpus split by one model's plan entry.
pub fn split_for_model<'a>(
    split: &ModelSplit,
    docs: &'a [AnnotatedDocument],
) -> Result<[Vec<&'a AnnotatedDocument>; 3]> {
    let (mut tr, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for d in docs {
        let p = prompt_of(d)?;
        if p == split.test {
            test.push(d);
        } else if p == split.dev {
            dev.push(d);
        } else if split.train.iter().any(|t| t == p) {
            tr.push(d);
        }
    }
    for d in tr.iter().chain(&dev) {
        if d.prompt.as_deref() == Some(split.test.as_str()) {
            return Err(Error::Consistency(format!(
                "{} from test prompt {} leaked into model {}",
                d.doc_id, split.test, split.model
            )));
        }
    }
    Ok([tr, dev, test])
}

fn encode_all(
    task: Task,
    docs: &[&AnnotatedDocument],
    vocab: &Vocab,
) -> Result<Vec<EncodedExample>> {
    let per: Vec<Vec<EncodedExample>> = docs
        .par_iter()
        .map(|d| encode_document(task, d, vocab, ComponentStrategy::default()))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub struct SeedModel {
    pub split: ModelSplit,
    pub outcome: TrainOutcome,
    /// Scores on the model's own test prompt.
    pub test_report: EvalReport,
}

/// Train one model per plan entry, in parallel.
pub fn train_seed_models(
    plan: &SeedPlan,
    task: Task,
    docs: &[AnnotatedDocument],
    vocab: &Vocab,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<Vec<SeedModel>> {
    plan.check()?;
    let tagset = task.tagset();
    plan.models
        .par_iter()
        .map(|split| {
            let [tr, dev, test] = split_for_model(split, docs)?;
            if tr.is_empty() {
                return Err(Error::usage(format!(
                    "model {} has no training documents",
                    split.model
                )));
            }
            let (tr, dev, test) = (
                encode_all(task, &tr, vocab)?,
                encode_all(task, &dev, vocab)?,
                encode_all(task, &test, vocab)?,
            );
            let seed = config.seed.wrapping_add(split.model as u64);
            let params = Params::init(model, seed)?;
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let outcome = train_split(params, &tr, &dev, &tagset, &cfg, |_| {})?;
            let test_report = evaluate_examples(&outcome.params, &test, &tagset)?;
            Ok(SeedModel {
                split: split.clone(),
                outcome,
                test_report,
            })
        })
        .collect()
}

/// Label `docs` with every model and resolve the votes per unit. The
/// output keeps each model's raw predictions as `Model(i)` spans next to the
/// resolved spans.
pub fn synthesize_labels(
    models: &[&Params],
    task: Task,
    docs: &[AnnotatedDocument],
    vocab: &Vocab,
) -> Result<Vec<AnnotatedDocument>> {
    if !matches!(task, Task::ArrowSentence | Task::PersuadeWord) {
        return Err(Error::usage(format!(
            "vote synthesis supports unit-level tasks, not {task}"
        )));
    }
    let tagset = task.tagset();
    let Some(first) = models.first() else {
        return Err(Error::usage("no models to vote"));
    };
    for m in models {
        if m.config.num_labels != tagset.num_labels() {
            return Err(Error::usage(format!(
                "model has {} labels, scheme {} has {}",
                m.config.num_labels,
                tagset.name,
                tagset.num_labels()
            )));
        }
        if m.config.vocab_size != first.config.vocab_size || m.config.vocab_size < vocab.len() {
            return Err(Error::usage("models do not share the tokenizer"));
        }
    }
    let unit = if task == Task::ArrowSentence {
        Unit::Sentence
    } else {
        Unit::Word
    };
    docs.par_iter()
        .map(|doc| {
            let examples = encode_document(task, doc, vocab, ComponentStrategy::default())?;
            let mut votes: Vec<Vec<TagId>> = Vec::with_capacity(models.len());
            for m in models {
                let preds = predict_all(m, &examples)?;
                votes.push(
                    preds
                        .into_iter()
                        .flatten()
                        .map(|l| tagset.label(l).expect("label in range"))
                        .collect(),
                );
            }
            let mut out = doc.clone();
            out.spans.clear();
            out.relations.clear();
            let n = doc.unit_len(unit);
            let none = tagset.untagged();
            for (mi, v) in votes.iter().enumerate() {
                push_unit_spans(&mut out, v, unit, Rater::Model(mi as u32 + 1), &none);
            }
            let resolved = (0..n)
                .map(|u| {
                    let column: Vec<TagId> = votes.iter().map(|v| v[u].clone()).collect();
                    resolve_votes(&column, &tagset)
                })
                .collect::<Result<Vec<_>>>()?;
            push_unit_spans(&mut out, &resolved, unit, Rater::Resolved, &none);
            Ok(out)
        })
        .collect()
}

fn push_unit_spans(
    doc: &mut AnnotatedDocument,
    tags: &[TagId],
    unit: Unit,
    rater: Rater,
    none: &TagId,
) {
    for (u, t) in tags.iter().enumerate() {
        if t == none {
            continue;
        }
        doc.spans.push(AnnotationSpan {
            span_id: format!("{rater}-{}", u + 1),
            tag: t.clone(),
            unit,
            start: u,
            end: u + 1,
            rater,
        });
    }
}

/// Per-unit vote provenance: `doc_id, unit, model-1..model-k, resolved`.
pub fn votes_table(docs: &[AnnotatedDocument], task: Task, k: usize) -> String {
    let unit = if task == Task::ArrowSentence {
        Unit::Sentence
    } else {
        Unit::Word
    };
    let none = task.tagset().untagged();
    let mut s = String::from("doc_id,unit");
    for i in 1..=k {
        let _ = write!(s, ",model-{i}");
    }
    s.push_str(",resolved\n");
    for d in docs {
        let cols: Vec<Vec<TagId>> = (1..=k as u32)
            .map(Rater::Model)
            .chain([Rater::Resolved])
            .map(|r| match unit {
                Unit::Sentence => d.sentence_tags(Some(r), &none),
                _ => d.word_tags(Some(r), &none),
            })
            .collect();
        for u in 0..d.unit_len(unit) {
            let _ = write!(s, "{},{}", d.doc_id, u);
            for c in &cols {
                let _ = write!(s, ",{}", c[u]);
            }
            s.push('\n');
        }
    }
    s
}

/// Retrain one model on the resolved synthetic labels.
pub fn train_universal(
    synthetic: &[AnnotatedDocument],
    task: Task,
    vocab: &Vocab,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if synthetic.is_empty() {
        return Err(Error::usage("empty synthetic corpus"));
    }
    let resolved: Vec<AnnotatedDocument> = synthetic
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.spans.retain(|s| s.rater == Rater::Resolved);
            d
        })
        .collect();
    let refs: Vec<&AnnotatedDocument> = resolved.iter().collect();
    let examples = encode_all(task, &refs, vocab)?;
    crate::training::train(
        Params::init(model, config.seed)?,
        &examples,
        &task.tagset(),
        config,
    )
}

pub struct EnsembleOutcome {
    pub plan: SeedPlan,
    pub seeds: Vec<SeedModel>,
    pub synthetic: Vec<AnnotatedDocument>,
    pub universal: TrainOutcome,
}

/// The whole protocol: seed models from `labeled`, votes over `unlabeled`,
/// then one universal model on the votes.
pub fn run_ensemble(
    task: Task,
    labeled: &[AnnotatedDocument],
    unlabeled: &[AnnotatedDocument],
    k: usize,
    vocab: &Vocab,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<EnsembleOutcome> {
    let mut prompts: Vec<String> = Vec::new();
    for d in labeled {
        let p = prompt_of(d)?;
        if !prompts.iter().any(|q| q == p) {
            prompts.push(p.to_string());
        }
    }
    prompts.sort();
    let plan = build_seed_plan(&prompts, k)?;
    let seeds = train_seed_models(&plan, task, labeled, vocab, model, config)?;
    let params: Vec<&Params> = seeds.iter().map(|s| &s.outcome.params).collect();
    let synthetic = synthesize_labels(&params, task, unlabeled, vocab)?;
    let universal = train_universal(&synthetic, task, vocab, model, config)?;
    Ok(EnsembleOutcome {
        plan,
        seeds,
        synthetic,
        universal,
    })
}
