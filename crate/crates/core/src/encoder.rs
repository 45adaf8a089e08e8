//! Segment-recurrent transformer encoder with relative attention.
//!
//! A document is processed in segments of at most `segment_len` tokens.
//! Layer `n` of segment `τ+1` attends over `[SG(m_τ^n) ∘ h_{τ+1}^{n-1}]`,
//! where the memory `m_τ^n` holds the last `mem_len` inputs of layer `n`
//! from earlier segments. Queries come from the current segment only.
//! Scores follow the Transformer-XL form
//! `(q_i + u)·k_j + (q_i + v)·W_r R_{i-j}` with sinusoidal `R`.
//!
//! Attention is bidirectional inside the current segment and reaches at
//! most `segment_len` positions back, so one layer extends the receptive
//! field by exactly `segment_len` tokens and `N` layers by `N·segment_len`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tokenizer::Vocab;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub ffn_width: usize,
    pub segment_len: usize,
    pub mem_len: usize,
    pub vocab_size: usize,
    pub num_labels: usize,
}

impl ModelConfig {
    /// Small configuration with `mem_len = segment_len` and a 4x feed-forward.
    pub fn toy(
        layers: usize,
        heads: usize,
        width: usize,
        segment_len: usize,
        vocab_size: usize,
        num_labels: usize,
    ) -> Self {
        ModelConfig {
            layers,
            heads,
            width,
            ffn_width: 4 * width,
            segment_len,
            mem_len: segment_len,
            vocab_size,
            num_labels,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.width == 0 || self.ffn_width == 0 {
            return bad("layers, heads, width and ffn_width must be positive");
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "width {} is not divisible by heads {}",
                self.width, self.heads
            )));
        }
        if self.segment_len == 0 {
            return bad("segment_len must be at least 1");
        }
        if self.vocab_size == 0 || self.num_labels == 0 {
            return bad("vocab_size and num_labels must be positive");
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    /// Longest distance over which one token can influence another.
    pub fn dependency_reach(&self) -> usize {
        if self.mem_len == 0 {
            0
        } else {
            self.layers * self.segment_len.min(self.mem_len)
        }
    }
}

const LAYER_TENSORS: [&str; 15] = [
    "w_q", "w_k", "w_v", "w_o", "w_r", "u", "v", "ln1_g", "ln1_b", "ff_w1", "ff_b1", "ff_w2",
    "ff_b2", "ln2_g", "ln2_b",
];

#[derive(Clone, Copy)]
enum L {
    Wq,
    Wk,
    Wv,
    Wo,
    Wr,
    U,
    V,
    Ln1G,
    Ln1B,
    FfW1,
    FfB1,
    FfW2,
    FfB2,
    Ln2G,
    Ln2B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
}

impl Params {
    /// Uniform(-1/√d, 1/√d) weights, unit layer-norm gains, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Params> {
        config.check()?;
        let d = config.width;
        let f = config.ffn_width;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform =
            |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..bound));
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        names.push("embedding".to_string());
        tensors.push(uniform(config.vocab_size, d));
        for n in 0..config.layers {
            for name in LAYER_TENSORS {
                let t = match name {
                    "w_q" | "w_k" | "w_v" | "w_o" | "w_r" => uniform(d, d),
                    "u" | "v" => uniform(1, d),
                    "ln1_g" | "ln2_g" => Array2::ones((1, d)),
                    "ff_w1" => uniform(d, f),
                    "ff_b1" => Array2::zeros((1, f)),
                    "ff_w2" => uniform(f, d),
                    _ => Array2::zeros((1, d)),
                };
                names.push(format!("layer{n}.{name}"));
                tensors.push(t);
            }
        }
        for head in ["label_head", "sequence_head"] {
            names.push(format!("{head}.w"));
            tensors.push(uniform(d, config.num_labels));
            names.push(format!("{head}.b"));
            tensors.push(Array2::zeros((1, config.num_labels)));
        }
        Ok(Params {
            config: config.clone(),
            names,
            tensors,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor(&self, i: usize) -> &Array2<f64> {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    fn layer_index(&self, n: usize, t: L) -> usize {
        1 + n * LAYER_TENSORS.len() + t as usize
    }

    fn head_index(&self, sequence: bool) -> (usize, usize) {
        let base = 1 + self.config.layers * LAYER_TENSORS.len() + if sequence { 2 } else { 0 };
        (base, base + 1)
    }

    // Checkpoint layout, all integers little-endian:
    //   b"ARGXCKPT", u32 version, u32 header length, header (UTF-8
    //   `key=value` lines of the model config), u32 section count, then per
    //   section: u32 name length, name, u32 rows, u32 cols, rows*cols f64
    //   in row-major order.

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        let header = config_header(&self.config);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Params> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(Error::config("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != CKPT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = read_u32(&mut r)? as usize;
        let mut header = vec![0u8; hlen];
        read_exact(&mut r, &mut header)?;
        let header = String::from_utf8(header)
            .map_err(|_| Error::config("checkpoint header is not UTF-8"))?;
        let config = parse_config_header(&header)?;
        let expected = Params::init(&config, 0)?;
        let count = read_u32(&mut r)? as usize;
        if count != expected.len() {
            return Err(Error::config(format!(
                "checkpoint has {count} sections, config implies {}",
                expected.len()
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for i in 0..count {
            let nlen = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; nlen];
            read_exact(&mut r, &mut name)?;
            if name != expected.names[i].as_bytes() {
                return Err(Error::config(format!(
                    "unexpected section {}",
                    String::from_utf8_lossy(&name)
                )));
            }
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            if (rows, cols) != expected.tensors[i].dim() {
                return Err(Error::config(format!(
                    "section {} has shape {rows}x{cols}",
                    expected.names[i]
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                read_exact(&mut r, &mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push(Array2::from_shape_vec((rows, cols), data).expect("shape checked"));
        }
        if !r.is_empty() {
            return Err(Error::config("trailing bytes after checkpoint"));
        }
        Ok(Params {
            config,
            names: expected.names,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Params> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Params::from_bytes(&bytes)
    }
}

const CKPT_MAGIC: &[u8; 8] = b"ARGXCKPT";
const CKPT_VERSION: u32 = 1;

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::config("truncated checkpoint"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn config_header(c: &ModelConfig) -> String {
    format!(
        "layers={}\nheads={}\nwidth={}\nffn_width={}\nsegment_len={}\nmem_len={}\nvocab_size={}\nnum_labels={}\n",
        c.layers, c.heads, c.width, c.ffn_width, c.segment_len, c.mem_len, c.vocab_size, c.num_labels
    )
}

fn parse_config_header(h: &str) -> Result<ModelConfig> {
    let get = |key: &str| -> Result<usize> {
        h.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::config(format!("checkpoint header lacks `{key}`")))
    };
    Ok(ModelConfig {
        layers: get("layers")?,
        heads: get("heads")?,
        width: get("width")?,
        ffn_width: get("ffn_width")?,
        segment_len: get("segment_len")?,
        mem_len: get("mem_len")?,
        vocab_size: get("vocab_size")?,
        num_labels: get("num_labels")?,
    })
}

/// Cached per-layer inputs from earlier segments; never differentiated.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState {
    pub layers: Vec<Array2<f64>>,
}

impl MemoryState {
    pub fn empty(config: &ModelConfig) -> MemoryState {
        MemoryState {
            layers: vec![Array2::zeros((0, config.width)); config.layers],
        }
    }

    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |m| m.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sinusoidal table for relative offsets `-(L-1)..=L`; row `t` holds
/// offset `t - (L-1)`.
pub fn relative_table(segment_len: usize, width: usize) -> Array2<f64> {
    let rows = 2 * segment_len;
    Array2::from_shape_fn((rows, width), |(t, c)| {
        let rel = t as f64 - (segment_len as f64 - 1.0);
        let k = (c / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * k / width as f64);
        if c % 2 == 0 {
            (rel * freq).sin()
        } else {
            (rel * freq).cos()
        }
    })
}

/// Visibility and relative-offset index for `len` queries over `mlen`
/// memory keys followed by `len` current keys.
fn attention_layout(mlen: usize, len: usize, segment_len: usize) -> (Array2<bool>, Array2<usize>) {
    let klen = mlen + len;
    let mut mask = Array2::from_elem((len, klen), false);
    let mut index = Array2::zeros((len, klen));
    for i in 0..len {
        for j in 0..klen {
            let rel = (mlen + i) as isize - j as isize;
            if rel <= segment_len as isize {
                mask[[i, j]] = true;
                index[[i, j]] = (rel + segment_len as isize - 1) as usize;
            }
        }
    }
    (mask, index)
}

/// A recorded computation: the tape plus one leaf per parameter tensor.
pub struct Graph {
    pub tape: Tape,
    params: Vec<Var>,
    rel: Option<Var>,
}

/// Values of one traced segment, for inspection.
#[derive(Clone, Debug)]
pub struct SegmentTrace {
    pub hidden: Array2<f64>,
    pub memory: MemoryState,
    /// Per layer.
    pub queries: Vec<Array2<f64>>,
    /// Per layer, per head: pre-softmax scores and attention weights.
    pub scores: Vec<Vec<Array2<f64>>>,
    pub attention: Vec<Vec<Array2<f64>>>,
}

struct SegmentVars {
    hidden: Var,
    memory: Vec<Option<Var>>,
    queries: Vec<Var>,
    scores: Vec<Vec<Var>>,
    attention: Vec<Vec<Var>>,
}

impl Graph {
    pub fn new(params: &Params) -> Graph {
        let mut tape = Tape::new();
        let vars = params
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(i, t.clone()))
            .collect();
        Graph {
            tape,
            params: vars,
            rel: None,
        }
    }

    /// Leaf for parameter tensor `i`.
    pub fn param_var(&self, i: usize) -> Var {
        self.params[i]
    }

    fn check_ids(params: &Params, ids: &[usize]) -> Result<()> {
        if let Some(bad) = ids.iter().find(|&&t| t >= params.config.vocab_size) {
            return Err(Error::usage(format!(
                "token id {bad} outside vocabulary of {}",
                params.config.vocab_size
            )));
        }
        Ok(())
    }

    fn segment(
        &mut self,
        params: &Params,
        ids: &[usize],
        memory: &[Option<Var>],
    ) -> Result<SegmentVars> {
        let c = &params.config;
        if ids.is_empty() {
            return Err(Error::usage("empty segment"));
        }
        if ids.len() > c.segment_len {
            return Err(Error::usage(format!(
                "segment of {} tokens exceeds segment_len {}",
                ids.len(),
                c.segment_len
            )));
        }
        if memory.len() != c.layers {
            return Err(Error::config(format!(
                "memory has {} layers, model has {}",
                memory.len(),
                c.layers
            )));
        }
        Self::check_ids(params, ids)?;
        let (d, dh) = (c.width, c.head_width());
        let len = ids.len();
        let rel = match self.rel {
            Some(r) => r,
            None => {
                let r = self.tape.constant(relative_table(c.segment_len, d));
                self.rel = Some(r);
                r
            }
        };
        let leaves = self.params.clone();
        let p = |t: L, n: usize| leaves[params.layer_index(n, t)];
        self.tape.set_scope(Some("embedding"));
        let mut h = self.tape.gather_rows(leaves[0], ids.to_vec());
        let mut new_memory = Vec::with_capacity(c.layers);
        let mut queries = Vec::new();
        let mut scores_out = Vec::new();
        let mut attn_out = Vec::new();
        for (n, mem) in memory.iter().copied().enumerate().take(c.layers) {
            self.tape.set_scope(Some(&format!("layer {n}")));
            let mem = mem.filter(|m| self.tape.value(*m).nrows() > 0);
            let mlen = mem.map_or(0, |m| self.tape.value(m).nrows());
            let cat = match mem {
                Some(m) => self.tape.concat_rows(&[m, h]),
                None => h,
            };
            if c.mem_len > 0 {
                let total = mlen + len;
                let keep = c.mem_len.min(total);
                let tail = self.tape.slice_rows(cat, total - keep, total);
                new_memory.push(Some(self.tape.stop_gradient(tail)));
            } else {
                new_memory.push(None);
            }

            let q = self.tape.matmul(h, p(L::Wq, n));
            let k = self.tape.matmul(cat, p(L::Wk, n));
            let v = self.tape.matmul(cat, p(L::Wv, n));
            let r = self.tape.matmul(rel, p(L::Wr, n));
            queries.push(q);
            let (mask, index) = attention_layout(mlen, len, c.segment_len);
            let index = std::rc::Rc::new(index);
            let mut heads = Vec::with_capacity(c.heads);
            let mut head_scores = Vec::new();
            let mut head_attn = Vec::new();
            for hd in 0..c.heads {
                let (a, b) = (hd * dh, (hd + 1) * dh);
                let qh = self.tape.slice_cols(q, a, b);
                let kh = self.tape.slice_cols(k, a, b);
                let vh = self.tape.slice_cols(v, a, b);
                let rh = self.tape.slice_cols(r, a, b);
                let uh = self.tape.slice_cols(p(L::U, n), a, b);
                let vbh = self.tape.slice_cols(p(L::V, n), a, b);
                let qu = self.tape.add_row(qh, uh);
                let kt = self.tape.transpose(kh);
                let ac = self.tape.matmul(qu, kt);
                let qv = self.tape.add_row(qh, vbh);
                let rt = self.tape.transpose(rh);
                let bd_full = self.tape.matmul(qv, rt);
                let bd = self.tape.gather_cols(bd_full, index.clone());
                let sum = self.tape.add(ac, bd);
                let score = self.tape.scale(sum, 1.0 / (dh as f64).sqrt());
                let attn = self.tape.masked_softmax(score, &mask);
                heads.push(self.tape.matmul(attn, vh));
                head_scores.push(score);
                head_attn.push(attn);
            }
            scores_out.push(head_scores);
            attn_out.push(head_attn);
            let joined = if heads.len() == 1 {
                heads[0]
            } else {
                self.tape.concat_cols(&heads)
            };
            let o = self.tape.matmul(joined, p(L::Wo, n));
            let x = self.tape.add(h, o);
            let x = self.tape.layer_norm(x);
            let x = self.tape.mul_row(x, p(L::Ln1G, n));
            let x = self.tape.add_row(x, p(L::Ln1B, n));
            let f = self.tape.matmul(x, p(L::FfW1, n));
            let f = self.tape.add_row(f, p(L::FfB1, n));
            let f = self.tape.gelu(f);
            let f = self.tape.matmul(f, p(L::FfW2, n));
            let f = self.tape.add_row(f, p(L::FfB2, n));
            let y = self.tape.add(x, f);
            let y = self.tape.layer_norm(y);
            let y = self.tape.mul_row(y, p(L::Ln2G, n));
            h = self.tape.add_row(y, p(L::Ln2B, n));
        }
        self.tape.set_scope(None);
        Ok(SegmentVars {
            hidden: h,
            memory: new_memory,
            queries,
            scores: scores_out,
            attention: attn_out,
        })
    }

    fn memory_vars(&mut self, memory: &MemoryState) -> Vec<Option<Var>> {
        memory
            .layers
            .iter()
            .map(|m| (m.nrows() > 0).then(|| self.tape.constant(m.clone())))
            .collect()
    }

    fn memory_values(&self, vars: &[Option<Var>], width: usize) -> MemoryState {
        MemoryState {
            layers: vars
                .iter()
                .map(|v| {
                    v.map_or_else(|| Array2::zeros((0, width)), |v| self.tape.value(v).clone())
                })
                .collect(),
        }
    }

    /// Hidden states for a whole document, segment by segment, memory
    /// threaded through stop-gradient nodes. `None` for an empty input.
    pub fn document(&mut self, params: &Params, ids: &[usize]) -> Result<Option<Var>> {
        let c = &params.config;
        let mut memory: Vec<Option<Var>> = vec![None; c.layers];
        let mut outputs = Vec::new();
        for chunk in ids.chunks(c.segment_len) {
            let seg = self.segment(params, chunk, &memory)?;
            memory = seg.memory;
            outputs.push(seg.hidden);
        }
        Ok(match outputs.len() {
            0 => None,
            1 => Some(outputs[0]),
            _ => Some(self.tape.concat_rows(&outputs)),
        })
    }

    /// Hidden states of one segment attending to a fixed memory.
    pub fn segment_with_memory(
        &mut self,
        params: &Params,
        ids: &[usize],
        memory: &MemoryState,
    ) -> Result<Var> {
        if memory.layers.len() != params.config.layers {
            return Err(Error::config(format!(
                "memory has {} layers, model has {}",
                memory.layers.len(),
                params.config.layers
            )));
        }
        let mem = self.memory_vars(memory);
        Ok(self.segment(params, ids, &mem)?.hidden)
    }

    /// Per-segment hidden states of a document, for inspection.
    pub fn document_segments(&mut self, params: &Params, ids: &[usize]) -> Result<Vec<Var>> {
        let mut memory: Vec<Option<Var>> = vec![None; params.config.layers];
        let mut outputs = Vec::new();
        for chunk in ids.chunks(params.config.segment_len) {
            let seg = self.segment(params, chunk, &memory)?;
            memory = seg.memory;
            outputs.push(seg.hidden);
        }
        Ok(outputs)
    }

    /// Label-head scores at the given rows of `hidden`.
    pub fn label_scores(
        &mut self,
        params: &Params,
        hidden: Var,
        positions: &[usize],
    ) -> Result<Var> {
        let rows = self.tape.value(hidden).nrows();
        if let Some(bad) = positions.iter().find(|&&p| p >= rows) {
            return Err(Error::usage(format!(
                "position {bad} outside input of {rows} tokens"
            )));
        }
        self.tape.set_scope(Some("label head"));
        let (w, b) = params.head_index(false);
        let g = self.tape.gather_rows(hidden, positions.to_vec());
        let s = self.tape.matmul(g, self.params[w]);
        let out = self.tape.add_row(s, self.params[b]);
        self.tape.set_scope(None);
        Ok(out)
    }

    /// Sequence-head scores (`1 × num_labels`) at row `position`.
    pub fn sequence_scores(
        &mut self,
        params: &Params,
        hidden: Var,
        position: usize,
    ) -> Result<Var> {
        let rows = self.tape.value(hidden).nrows();
        if position >= rows {
            return Err(Error::usage(format!(
                "position {position} outside input of {rows} tokens"
            )));
        }
        self.tape.set_scope(Some("sequence head"));
        let (w, b) = params.head_index(true);
        let g = self.tape.gather_rows(hidden, vec![position]);
        let s = self.tape.matmul(g, self.params[w]);
        let out = self.tape.add_row(s, self.params[b]);
        self.tape.set_scope(None);
        Ok(out)
    }
}

/// Run one segment against cached memory.
pub fn forward_segment(
    params: &Params,
    segment: &[usize],
    memory: &MemoryState,
) -> Result<(Array2<f64>, MemoryState)> {
    let t = trace_segment(params, segment, memory)?;
    Ok((t.hidden, t.memory))
}

/// Like [`forward_segment`], also returning queries, scores and attention.
pub fn trace_segment(
    params: &Params,
    segment: &[usize],
    memory: &MemoryState,
) -> Result<SegmentTrace> {
    let c = &params.config;
    if memory.layers.len() != c.layers {
        return Err(Error::config(format!(
            "memory has {} layers, model has {}",
            memory.layers.len(),
            c.layers
        )));
    }
    if let Some(m) = memory.layers.iter().find(|m| m.ncols() != c.width) {
        return Err(Error::config(format!(
            "memory width {} differs from model width {}",
            m.ncols(),
            c.width
        )));
    }
    let mut g = Graph::new(params);
    let mem = g.memory_vars(memory);
    let seg = g.segment(params, segment, &mem)?;
    let grab = |vs: &[Var]| {
        vs.iter()
            .map(|v| g.tape.value(*v).clone())
            .collect::<Vec<_>>()
    };
    Ok(SegmentTrace {
        hidden: g.tape.value(seg.hidden).clone(),
        memory: g.memory_values(&seg.memory, c.width),
        queries: grab(&seg.queries),
        scores: seg.scores.iter().map(|s| grab(s)).collect(),
        attention: seg.attention.iter().map(|s| grab(s)).collect(),
    })
}

/// Label-head scores for `positions` of one segment.
pub fn classify_positions(
    params: &Params,
    ids: &[usize],
    memory: &MemoryState,
    positions: &[usize],
) -> Result<Array2<f64>> {
    if let Some(bad) = positions.iter().find(|&&p| p >= ids.len()) {
        return Err(Error::usage(format!(
            "position {bad} outside segment of {} tokens",
            ids.len()
        )));
    }
    if positions.is_empty() {
        return Ok(Array2::zeros((0, params.config.num_labels)));
    }
    let mut g = Graph::new(params);
    let mem = g.memory_vars(memory);
    let seg = g.segment(params, ids, &mem)?;
    let s = g.label_scores(params, seg.hidden, positions)?;
    Ok(g.tape.value(s).clone())
}

/// Label-head scores for `positions` anywhere in a document of any length.
pub fn classify_document_positions(
    params: &Params,
    ids: &[usize],
    positions: &[usize],
) -> Result<Array2<f64>> {
    if positions.is_empty() {
        return Ok(Array2::zeros((0, params.config.num_labels)));
    }
    let mut g = Graph::new(params);
    let hidden = g
        .document(params, ids)?
        .ok_or_else(|| Error::usage("positions requested on an empty input"))?;
    let s = g.label_scores(params, hidden, positions)?;
    Ok(g.tape.value(s).clone())
}

/// Sequence-head scores read at the last class token.
pub fn classify_sequence(params: &Params, ids: &[usize]) -> Result<Array1<f64>> {
    let cls = ids
        .iter()
        .rposition(|&t| t == Vocab::CLS)
        .ok_or_else(|| Error::usage("input has no class token"))?;
    let mut g = Graph::new(params);
    let hidden = g
        .document(params, ids)?
        .expect("non-empty: contains a class token");
    let s = g.sequence_scores(params, hidden, cls)?;
    Ok(g.tape.value(s).row(0).to_owned())
}

/// Hidden states for every position of an input of any length.
pub fn stream_document(params: &Params, ids: &[usize]) -> Result<Array2<f64>> {
    let mut g = Graph::new(params);
    Ok(match g.document(params, ids)? {
        Some(h) => g.tape.value(h).clone(),
        None => Array2::zeros((0, params.config.width)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::toy(2, 2, 8, 4, 20, 3)
    }

    #[test]
    fn config_checks() {
        let mut c = cfg();
        c.heads = 3;
        assert!(matches!(c.check(), Err(Error::Config(_))));
        assert!(cfg().check().is_ok());
        assert_eq!(cfg().dependency_reach(), 8);
    }

    #[test]
    fn shapes_and_memory() {
        let p = Params::init(&cfg(), 1).unwrap();
        let (h, m) = forward_segment(&p, &[1, 2, 3], &MemoryState::empty(&p.config)).unwrap();
        assert_eq!(h.dim(), (3, 8));
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.len(), 3);
        let (_, m2) = forward_segment(&p, &[4, 5, 6], &m).unwrap();
        assert_eq!(m2.len(), 4);
    }

    #[test]
    fn segment_too_long() {
        let p = Params::init(&cfg(), 1).unwrap();
        let err = forward_segment(&p, &[1; 5], &MemoryState::empty(&p.config)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        let err = forward_segment(&p, &[1], &MemoryState { layers: vec![] }).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn attention_rows_normalized() {
        let p = Params::init(&cfg(), 2).unwrap();
        let (_, m) = forward_segment(&p, &[1, 2, 3, 4], &MemoryState::empty(&p.config)).unwrap();
        let t = trace_segment(&p, &[5, 6, 7], &m).unwrap();
        for layer in &t.attention {
            for head in layer {
                for row in head.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn short_document_equals_one_segment() {
        let p = Params::init(&cfg(), 3).unwrap();
        let ids = [3, 1, 4];
        let (h, _) = forward_segment(&p, &ids, &MemoryState::empty(&p.config)).unwrap();
        assert_eq!(stream_document(&p, &ids).unwrap(), h);
        assert_eq!(stream_document(&p, &[]).unwrap().nrows(), 0);
    }

    #[test]
    fn second_segment_sees_first() {
        let p = Params::init(&cfg(), 4).unwrap();
        let ids = [1, 2, 3, 4, 5, 6, 7, 8];
        let full = stream_document(&p, &ids).unwrap();
        let (alone, _) = forward_segment(&p, &ids[4..], &MemoryState::empty(&p.config)).unwrap();
        let diff = (&full.slice(ndarray::s![4.., ..]) - &alone)
            .mapv(f64::abs)
            .sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn classify_contracts() {
        let p = Params::init(&cfg(), 5).unwrap();
        let empty = MemoryState::empty(&p.config);
        assert_eq!(
            classify_positions(&p, &[1, 2], &empty, &[]).unwrap().dim(),
            (0, 3)
        );
        assert_eq!(
            classify_positions(&p, &[1, 2], &empty, &[1]).unwrap().dim(),
            (1, 3)
        );
        assert!(classify_positions(&p, &[1, 2], &empty, &[2]).is_err());
        assert!(classify_sequence(&p, &[1, 2]).is_err());
        let a = classify_sequence(&p, &[1, 2, Vocab::CLS, Vocab::SEP]).unwrap();
        let b = classify_sequence(&p, &[1, 2, Vocab::CLS, Vocab::SEP]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn token_outside_vocab() {
        let p = Params::init(&cfg(), 5).unwrap();
        assert!(matches!(stream_document(&p, &[25]), Err(Error::Usage(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = Params::init(&cfg(), 6).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..8], b"ARGXCKPT");
        assert_eq!(Params::from_bytes(&bytes).unwrap(), p);
        assert!(Params::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(Params::init(&cfg(), 6).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn window_layout() {
        let (mask, index) = attention_layout(4, 2, 4);
        // query 0 sits at offset 4 and reaches back to key 0
        assert_eq!(mask.row(0).to_vec(), vec![true; 6]);
        // query 1 cannot see key 0 (distance 5)
        assert!(!mask[[1, 0]] && mask[[1, 1]]);
        assert_eq!(index[[0, 5]], 2); // rel -1 -> row 2
    }
}
