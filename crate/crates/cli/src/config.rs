//! Flat `key = value` run configuration covering every training and model
//! field.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use argannot_core::{ModelConfig, StopMetric, Task, TrainConfig};
use serde::Deserialize;

use crate::UsageError;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatConfig {
    epochs: usize,
    max_tokens: usize,
    batch_size: usize,
    learning_rate: f64,
    dev_fraction: f64,
    seed: u64,
    stop_metric: StopMetric,
    weight_decay: f64,
    layers: usize,
    heads: usize,
    width: usize,
    ffn_width: usize,
    segment_len: usize,
    mem_len: usize,
    vocab_size: usize,
    num_labels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn default_for(task: Task) -> RunConfig {
        RunConfig {
            train: TrainConfig::default(),
            model: ModelConfig::toy(2, 2, 32, 64, 2000, task.tagset().num_labels()),
        }
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let f: FlatConfig =
            toml::from_str(text).map_err(|e| UsageError(format!("config: {}", e.message())))?;
        Ok(RunConfig {
            train: TrainConfig {
                epochs: f.epochs,
                max_tokens: f.max_tokens,
                batch_size: f.batch_size,
                learning_rate: f.learning_rate,
                dev_fraction: f.dev_fraction,
                seed: f.seed,
                stop_metric: f.stop_metric,
                weight_decay: f.weight_decay,
            },
            model: ModelConfig {
                layers: f.layers,
                heads: f.heads,
                width: f.width,
                ffn_width: f.ffn_width,
                segment_len: f.segment_len,
                mem_len: f.mem_len,
                vocab_size: f.vocab_size,
                num_labels: f.num_labels,
            },
        })
    }

    /// Read `path` (defaults for `task` when absent), apply a seed override
    /// and check the result against the task.
    pub fn load(path: Option<&Path>, task: Task, seed: Option<u64>) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default_for(task),
        };
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.train.check()?;
        cfg.model.check()?;
        let want = task.tagset().num_labels();
        if cfg.model.num_labels != want {
            return Err(UsageError(format!(
                "config has num_labels = {} but task {task} has {want} labels",
                cfg.model.num_labels
            ))
            .into());
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let (t, m) = (&self.train, &self.model);
        let mut s = String::from("# training\n");
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "max_tokens = {}", t.max_tokens);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", t.learning_rate);
        let _ = writeln!(s, "dev_fraction = {:?}", t.dev_fraction);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "stop_metric = \"{}\"", t.stop_metric);
        let _ = writeln!(s, "weight_decay = {:?}", t.weight_decay);
        s.push_str("\n# model\n");
        let _ = writeln!(s, "layers = {}", m.layers);
        let _ = writeln!(s, "heads = {}", m.heads);
        let _ = writeln!(s, "width = {}", m.width);
        let _ = writeln!(s, "ffn_width = {}", m.ffn_width);
        let _ = writeln!(s, "segment_len = {}", m.segment_len);
        let _ = writeln!(s, "mem_len = {}", m.mem_len);
        let _ = writeln!(s, "vocab_size = {}", m.vocab_size);
        let _ = writeln!(s, "num_labels = {}", m.num_labels);
        s
    }
}
