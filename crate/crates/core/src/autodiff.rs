//! Tape-based reverse-mode differentiation over 2-D `f64` arrays.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints. Leaves created
//! with [`Tape::param`] report their gradients by parameter index.

use std::rc::Rc;

use ndarray::{s, Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Clone, Debug)]
enum Op {
    Param(usize),
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm(Var),
    MaskedSoftmax(Var),
    GatherRows(Var, Rc<Vec<usize>>),
    GatherCols(Var, Rc<Array2<usize>>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    StopGradient,
}

struct Node {
    value: Array2<f64>,
    op: Op,
    /// Optional label used in numerical error reports.
    label: Option<Rc<str>>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    scope: Option<Rc<str>>,
}

/// Adjoints after a backward pass.
#[derive(Debug)]
pub struct Gradients {
    node: Vec<Option<Array2<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of a node, `None` when nothing flowed into it.
    pub fn of(&self, v: Var) -> Option<&Array2<f64>> {
        self.node[v.0].as_ref()
    }

    /// Gradient for parameter `index`, if it was used and received any.
    pub fn param(&self, index: usize) -> Option<&Array2<f64>> {
        self.params
            .iter()
            .find(|(p, _)| *p == index)
            .and_then(|(_, n)| self.node[*n].as_ref())
    }

    /// `(parameter index, gradient)` pairs for every parameter leaf.
    pub fn params(&self) -> impl Iterator<Item = (usize, &Array2<f64>)> {
        self.params
            .iter()
            .filter_map(|(p, n)| self.node[*n].as_ref().map(|g| (*p, g)))
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn layer_norm_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut y = x.clone();
    let mut inv = Array1::zeros(x.nrows());
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let r = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * r);
        inv[i] = r;
    }
    (y, inv)
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Label attached to nodes created from now on (e.g. `layer 2`).
    pub fn set_scope(&mut self, scope: Option<&str>) {
        self.scope = scope.map(Rc::from);
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            label: self.scope.clone(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn param(&mut self, index: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a` plus the `1×n` row `r` broadcast over rows.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let v = self.value(a) + self.value(r);
        self.push(v, Op::AddRow(a, r))
    }

    /// `a` times the `1×n` row `r`, elementwise per row.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let v = self.value(a) * self.value(r);
        self.push(v, Op::MulRow(a, r))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let (v, _) = layer_norm_rows(self.value(a));
        self.push(v, Op::LayerNorm(a))
    }

    /// Row softmax over entries where `mask` is true; other entries are 0.
    /// A row with no allowed entry is all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: &Array2<bool>) -> Var {
        let x = self.value(a);
        assert_eq!(x.dim(), mask.dim(), "mask shape");
        let mut y = Array2::zeros(x.dim());
        for ((mut yr, xr), mr) in y.rows_mut().into_iter().zip(x.rows()).zip(mask.rows()) {
            let max = xr
                .iter()
                .zip(mr.iter())
                .filter(|(_, m)| **m)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut sum = 0.0;
            for ((o, v), m) in yr.iter_mut().zip(xr.iter()).zip(mr.iter()) {
                if *m {
                    *o = (v - max).exp();
                    sum += *o;
                }
            }
            yr.mapv_inplace(|v| v / sum);
        }
        self.push(y, Op::MaskedSoftmax(a))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let x = self.value(a);
        let v = x.select(Axis(0), &rows);
        self.push(v, Op::GatherRows(a, Rc::new(rows)))
    }

    /// `out[i][j] = a[i][index[i][j]]`.
    pub fn gather_cols(&mut self, a: Var, index: Rc<Array2<usize>>) -> Var {
        let x = self.value(a);
        let v = Array2::from_shape_fn(index.dim(), |(i, j)| x[[i, index[[i, j]]]]);
        self.push(v, Op::GatherCols(a, index))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat rows: column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    /// Identity in the forward pass; blocks all gradient.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::StopGradient)
    }

    /// Propagate the given output adjoints back through the tape.
    pub fn backward(&self, seeds: &[(Var, Array2<f64>)]) -> Result<Gradients> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }
        for (v, g) in seeds {
            assert_eq!(self.value(*v).dim(), g.dim(), "seed shape");
            acc(&mut grads, *v, g.clone());
        }
        let last = seeds.iter().map(|(v, _)| v.0).max().unwrap_or(0);
        for idx in (0..=last.min(self.nodes.len().saturating_sub(1))).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical {
                    location: node.label.as_deref().unwrap_or("encoder").to_string(),
                    message: format!(
                        "non-finite gradient at node {idx} ({:?})",
                        op_name(&node.op)
                    ),
                });
            }
            match &node.op {
                Op::Param(_) | Op::Const | Op::StopGradient => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g.clone());
                }
                Op::AddRow(a, r) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, g.clone());
                }
                Op::MulRow(a, r) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ga = &g * self.value(*r);
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, &g * *k),
                Op::Gelu(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|o, x| *o *= gelu_grad(*x));
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm(a) => {
                    let (y, inv) = layer_norm_rows(self.value(*a));
                    let n = y.ncols() as f64;
                    let mut ga = Array2::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let (gr, yr) = (g.row(i), y.row(i));
                        let mg = gr.sum() / n;
                        let mgy = gr.dot(&yr) / n;
                        for j in 0..y.ncols() {
                            ga[[i, j]] = inv[i] * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MaskedSoftmax(a) => {
                    let y = &node.value;
                    let mut ga = Array2::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let dot = g.row(i).dot(&y.row(i));
                        for j in 0..y.ncols() {
                            ga[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(src);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherCols(a, index) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for ((i, j), &k) in index.indexed_iter() {
                        ga[[i, k]] += g[[i, j]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![at..at + n, ..]).to_owned());
                        at += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., at..at + n]).to_owned());
                        at += n;
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![*start..*end, ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
            }
            grads[idx] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(n, node)| match node.op {
                Op::Param(p) => Some((p, n)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            node: grads,
            params,
        })
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Param(_) => "param",
        Op::Const => "const",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::MulRow(..) => "mul_row",
        Op::Scale(..) => "scale",
        Op::Gelu(_) => "gelu",
        Op::LayerNorm(_) => "layer_norm",
        Op::MaskedSoftmax(_) => "masked_softmax",
        Op::GatherRows(..) => "gather_rows",
        Op::GatherCols(..) => "gather_cols",
        Op::ConcatRows(_) => "concat_rows",
        Op::ConcatCols(_) => "concat_cols",
        Op::SliceRows(..) => "slice_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::Transpose(_) => "transpose",
        Op::StopGradient => "stop_gradient",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Scalar loss `sum(out * w)` for a fixed weight matrix, differentiated
    /// both ways.
    fn check<F>(inputs: &[Array2<f64>], f: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, x)| tape.param(i, x.clone()))
            .collect();
        let out = f(&mut tape, &vars);
        let dim = tape.value(out).dim();
        let w = Array2::from_shape_fn(dim, |(i, j)| 0.3 + 0.7 * ((i * 7 + j * 3) % 5) as f64);
        let grads = tape.backward(&[(out, w.clone())]).unwrap();
        let loss = |xs: &[Array2<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| t.param(i, x.clone()))
                .collect();
            let o = f(&mut t, &vs);
            (t.value(o) * &w).sum()
        };
        let eps = 1e-6;
        for (p, x) in inputs.iter().enumerate() {
            let g = grads
                .param(p)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(x.dim()));
            for idx in 0..x.len() {
                let (r, c) = (idx / x.ncols(), idx % x.ncols());
                let mut plus = inputs.to_vec();
                plus[p][[r, c]] += eps;
                let mut minus = inputs.to_vec();
                minus[p][[r, c]] -= eps;
                let num = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!(
                    (num - g[[r, c]]).abs() <= 1e-6 * (1.0 + num.abs()),
                    "input {p} [{r},{c}]: numeric {num} vs analytic {}",
                    g[[r, c]]
                );
            }
        }
    }

    fn m(rows: usize, cols: usize, seed: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            (((i * 31 + j * 17 + seed * 13) % 23) as f64 - 11.0) / 9.0
        })
    }

    #[test]
    fn matmul_add_transpose() {
        check(&[m(3, 4, 1), m(4, 2, 2), m(3, 2, 3)], |t, v| {
            let p = t.matmul(v[0], v[1]);
            let q = t.add(p, v[2]);
            t.transpose(q)
        });
    }

    #[test]
    fn row_broadcasts_and_scale() {
        check(&[m(3, 4, 1), m(1, 4, 2), m(1, 4, 3)], |t, v| {
            let a = t.mul_row(v[0], v[1]);
            let b = t.add_row(a, v[2]);
            t.scale(b, -1.5)
        });
    }

    #[test]
    fn gelu_and_layer_norm() {
        check(&[m(3, 5, 4)], |t, v| {
            let a = t.gelu(v[0]);
            t.layer_norm(a)
        });
    }

    #[test]
    fn masked_softmax_gradients() {
        let mask = array![
            [true, false, true],
            [true, true, true],
            [false, false, false]
        ];
        check(&[m(3, 3, 5)], |t, v| t.masked_softmax(v[0], &mask));
    }

    #[test]
    fn masked_softmax_rows() {
        let mut t = Tape::new();
        let x = t.constant(m(2, 4, 1));
        let y = t.masked_softmax(x, &array![[true, true, false, true], [false; 4]]);
        let y = t.value(y);
        assert!((y.row(0).sum() - 1.0).abs() < 1e-12);
        assert_eq!(y[[0, 2]], 0.0);
        assert_eq!(y.row(1).sum(), 0.0);
    }

    #[test]
    fn gathers_slices_concats() {
        let index = Rc::new(array![[2, 0], [1, 1]]);
        check(&[m(4, 3, 6), m(2, 3, 7)], |t, v| {
            let g = t.gather_rows(v[0], vec![3, 0, 3]);
            let c = t.concat_rows(&[g, v[1]]);
            let sr = t.slice_rows(c, 1, 3);
            let left = t.slice_cols(sr, 0, 2);
            let gc = t.gather_cols(sr, index.clone());
            t.concat_cols(&[left, gc])
        });
    }

    #[test]
    fn stop_gradient_blocks() {
        let mut t = Tape::new();
        let x = t.param(0, m(2, 2, 1));
        let sg = t.stop_gradient(x);
        let y = t.add(sg, x);
        let g = t.backward(&[(y, Array2::ones((2, 2)))]).unwrap();
        assert_eq!(g.param(0).unwrap(), &Array2::<f64>::ones((2, 2)));
        assert!(g.of(sg).unwrap().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn non_finite_gradient_names_scope() {
        let mut t = Tape::new();
        t.set_scope(Some("layer 3"));
        let x = t.param(0, m(1, 2, 1));
        let y = t.scale(x, 1.0);
        let err = t.backward(&[(y, array![[f64::NAN, 0.0]])]).unwrap_err();
        assert!(matches!(err, Error::Numerical { ref location, .. } if location == "layer 3"));
    }
}
