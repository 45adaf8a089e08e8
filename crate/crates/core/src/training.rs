//! Masked cross-entropy, AdamW and the epoch loop with dev-set model
//! selection.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codecs::EncodedExample;
use crate::encoder::{Graph, Params};
use crate::error::{Error, Result};
use crate::metrics::{report_from_tags, EvalReport, StopMetric};
use crate::schemes::{TagId, TagSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub max_tokens: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dev_fraction: f64,
    pub seed: u64,
    pub stop_metric: StopMetric,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            max_tokens: 2048,
            batch_size: 1,
            learning_rate: 1e-3,
            dev_fraction: 0.10,
            seed: 0,
            stop_metric: StopMetric::SumKappa,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.max_tokens == 0 || self.batch_size == 0 {
            return Err(Error::config("max_tokens and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::config(format!(
                "dev_fraction must lie in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub positions: usize,
    /// Every target was the ignore marker; loss and gradient are zero.
    pub all_ignored: bool,
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `scores`, skipping `None` targets. Returns the gradient w.r.t. `scores`.
pub fn masked_cross_entropy(
    scores: &Array2<f64>,
    targets: &[Option<usize>],
) -> Result<(LossReport, Array2<f64>)> {
    if scores.nrows() != targets.len() {
        return Err(Error::usage(format!(
            "{} score rows for {} targets",
            scores.nrows(),
            targets.len()
        )));
    }
    let mut grad = Array2::zeros(scores.raw_dim());
    let count = targets.iter().flatten().count();
    if count == 0 {
        log::warn!("all {} positions are ignored", targets.len());
        return Ok((
            LossReport {
                loss: 0.0,
                positions: 0,
                all_ignored: true,
            },
            grad,
        ));
    }
    let k = scores.ncols();
    let mut total = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        if t >= k {
            return Err(Error::usage(format!("target {t} outside {k} labels")));
        }
        let row = scores.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|s| (s - max).exp()).sum();
        let log_z = max + z.ln();
        total += log_z - row[t];
        for j in 0..k {
            let p = (row[j] - log_z).exp();
            grad[[i, j]] = (p - if j == t { 1.0 } else { 0.0 }) / count as f64;
        }
    }
    Ok((
        LossReport {
            loss: total / count as f64,
            positions: count,
            all_ignored: false,
        },
        grad,
    ))
}

/// Decoupled-weight-decay Adam. Decay applies to matrices only, not to
/// gains, biases or the per-head position vectors.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(params: &Params, learning_rate: f64, weight_decay: f64) -> AdamW {
        let zeros: Vec<Array2<f64>> = params
            .tensors()
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect();
        AdamW {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Apply one update; tensors without a gradient only decay.
    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<usize, Array2<f64>>) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.learning_rate);
            let p = params.tensor_mut(i);
            if self.weight_decay > 0.0 && p.nrows() > 1 && p.ncols() > 1 {
                p.mapv_inplace(|x| x * (1.0 - lr * self.weight_decay));
            }
            let Some(g) = grads.get(&i) else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Forward, loss and parameter gradients for one example.
pub fn loss_and_gradients(
    params: &Params,
    example: &EncodedExample,
) -> Result<(LossReport, BTreeMap<usize, Array2<f64>>)> {
    if example.input_ids.len() != example.targets.len() {
        return Err(Error::usage(format!(
            "{}: inputs and targets differ in length",
            example.doc_id
        )));
    }
    let targets: Vec<Option<usize>> = example
        .labeled
        .iter()
        .map(|&p| example.targets[p])
        .collect();
    if targets.is_empty() {
        let (report, _) = masked_cross_entropy(&Array2::zeros((0, params.config.num_labels)), &[])?;
        return Ok((report, BTreeMap::new()));
    }
    let mut g = Graph::new(params);
    let hidden = g
        .document(params, &example.input_ids)?
        .expect("labeled positions imply a non-empty input");
    let scores = if example.task.is_sequence() {
        g.sequence_scores(params, hidden, example.labeled[0])?
    } else {
        g.label_scores(params, hidden, &example.labeled)?
    };
    let (report, seed) = masked_cross_entropy(g.tape.value(scores), &targets)?;
    let grads = g.tape.backward(&[(scores, seed)])?;
    Ok((
        report,
        grads.params().map(|(i, t)| (i, t.clone())).collect(),
    ))
}

/// Raw scores at the labeled positions.
pub fn example_scores(params: &Params, example: &EncodedExample) -> Result<Array2<f64>> {
    if example.labeled.is_empty() {
        return Ok(Array2::zeros((0, params.config.num_labels)));
    }
    let mut g = Graph::new(params);
    let hidden = g.document(params, &example.input_ids)?.expect("non-empty");
    let s = if example.task.is_sequence() {
        g.sequence_scores(params, hidden, example.labeled[0])?
    } else {
        g.label_scores(params, hidden, &example.labeled)?
    };
    Ok(g.tape.value(s).clone())
}

/// Argmax label at each labeled position; ties go to the lower id.
pub fn predict_example(params: &Params, example: &EncodedExample) -> Result<Vec<usize>> {
    let scores = example_scores(params, example)?;
    Ok(scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Predictions for many examples, fanned out over threads.
pub fn predict_all(params: &Params, examples: &[EncodedExample]) -> Result<Vec<Vec<usize>>> {
    examples
        .par_iter()
        .map(|e| predict_example(params, e))
        .collect()
}

/// Scores predictions against gold targets with the tag-set's metrics.
pub fn evaluate_examples(
    params: &Params,
    examples: &[EncodedExample],
    tagset: &TagSet,
) -> Result<EvalReport> {
    let preds = predict_all(params, examples)?;
    let tag = |id: usize| {
        tagset
            .label(id)
            .unwrap_or_else(|| TagId::new(format!("#{id}")))
    };
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (e, p) in examples.iter().zip(preds) {
        gold.extend(e.gold().into_iter().map(tag));
        pred.extend(p.into_iter().map(tag));
    }
    let unit = if examples.first().is_some_and(|e| e.task.is_sequence()) {
        "pair"
    } else {
        "position"
    };
    report_from_tags(&pred, &gold, tagset, unit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    pub dev_kappa_sum: f64,
    pub dev_accuracy: f64,
    pub stop_value: f64,
    /// Examples whose labeled positions were all ignored or truncated away.
    pub ignored_examples: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Params,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Document-level train/dev split: every example of a document lands on the
/// same side.
pub fn split_dev(
    examples: &[EncodedExample],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<EncodedExample>, Vec<EncodedExample>)> {
    let mut docs: Vec<&str> = Vec::new();
    for e in examples {
        if !docs.contains(&e.doc_id.as_str()) {
            docs.push(&e.doc_id);
        }
    }
    if docs.len() < 2 {
        return Err(Error::usage(format!(
            "need examples from at least 2 documents to split off a dev set, got {}",
            docs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);
    let n_dev = ((docs.len() as f64 * dev_fraction).round() as usize).clamp(1, docs.len() - 1);
    let dev_docs = &docs[..n_dev];
    let (dev, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .partition(|e| dev_docs.contains(&e.doc_id.as_str()));
    Ok((train, dev))
}

/// Split off a dev set by `config.seed` and train.
pub fn train(
    params: Params,
    data: &[EncodedExample],
    tagset: &TagSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::usage("empty training set"));
    }
    config.check()?;
    let (tr, dev) = split_dev(data, config.dev_fraction, config.seed)?;
    train_split(params, &tr, &dev, tagset, config, |_| {})
}

/// Train on `train`, score `dev` after every epoch and return the
/// parameters of the best epoch (earliest on ties). `on_epoch` sees each
/// record as it is produced.
pub fn train_split(
    mut params: Params,
    train: &[EncodedExample],
    dev: &[EncodedExample],
    tagset: &TagSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::usage("empty training set"));
    }
    config.check()?;
    if tagset.num_labels() != params.config.num_labels {
        return Err(Error::config(format!(
            "model has {} labels, scheme {} has {}",
            params.config.num_labels,
            tagset.name,
            tagset.num_labels()
        )));
    }
    let train: Vec<EncodedExample> = train
        .iter()
        .map(|e| e.truncated(config.max_tokens))
        .collect();
    let dev: Vec<EncodedExample> = dev.iter().map(|e| e.truncated(config.max_tokens)).collect();
    let mut opt = AdamW::new(&params, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Params)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        let mut ignored = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut acc: BTreeMap<usize, Array2<f64>> = BTreeMap::new();
            let mut used = 0usize;
            for &i in batch {
                let (report, grads) = loss_and_gradients(&params, &train[i])?;
                if report.all_ignored {
                    ignored += 1;
                    continue;
                }
                loss_sum += report.loss;
                counted += 1;
                used += 1;
                for (k, g) in grads {
                    match acc.get_mut(&k) {
                        Some(a) => *a += &g,
                        None => {
                            acc.insert(k, g);
                        }
                    }
                }
            }
            if used == 0 {
                continue;
            }
            if used > 1 {
                for g in acc.values_mut() {
                    *g /= used as f64;
                }
            }
            opt.step(&mut params, &acc);
        }
        let report =
            evaluate_examples(&params, if dev.is_empty() { &train } else { &dev }, tagset)?;
        let stop_value = report.metric_sum(config.stop_metric);
        let record = EpochRecord {
            epoch,
            train_loss: if counted == 0 {
                0.0
            } else {
                loss_sum / counted as f64
            },
            dev_macro_f1: report.macro_f1,
            dev_kappa_sum: report.kappa_sum,
            dev_accuracy: report.micro_accuracy,
            stop_value,
            ignored_examples: ignored,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, dev {} {:.4}",
            record.train_loss,
            config.stop_metric,
            stop_value
        );
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|(v, _, _)| stop_value > *v) {
            best = Some((stop_value, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
    })
}

/// Metric log as one JSON object per line.
pub fn log_to_jsonl(log: &[EpochRecord]) -> String {
    log.iter()
        .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
        .collect()
}
