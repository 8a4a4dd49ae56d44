//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! read from a shared [`ParamStore`] by reference, so several graphs may be
//! built concurrently against the same store. [`Graph::backward`] replays the
//! tape in reverse and returns a [`Gradients`] value that the caller folds
//! into the store in a fixed order.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// GELU tanh-approximation constant √(2/π).
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// GELU tanh-approximation cubic coefficient.
pub const GELU_CUBIC: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Gather {
        sources: Vec<Var>,
        picks: Vec<(usize, usize)>,
    },
    MeanRows(Var),
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
    SumSquares(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => &self.store.get(*id).value,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Input,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Const,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// The tape node for a stored parameter. Frozen parameters behave as
    /// constants. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: self.store.get(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions disagree: [{m}×{k}] · [{k2}×{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` for `a: [m×k]`, `b: [n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (n, k2) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul_nt inner dimensions disagree: [{m}×{k}] · [{n}×{k2}]ᵀ"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), true, &mut out, false);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNt(a, b), &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let t = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let t = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let t = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x[…×d] + bias[d]`, broadcasting over all leading axes.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(bias).numel() != d {
            return Err(Error::shape(format!(
                "bias of shape {:?} does not match last axis {d} of {:?}",
                self.value(bias).shape(),
                self.value(x).shape()
            )));
        }
        let mut t = self.value(x).clone();
        let b = self.value(bias).data();
        for row in t.data_mut().chunks_mut(d) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        Ok(self.push(t, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s), &[x])
    }

    /// Tanh-approximated GELU:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(gelu_scalar);
        self.push(t, Op::Gelu(x), &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let mut t = self.value(x).clone();
        let d = t.last_dim();
        for row in t.data_mut().chunks_mut(d) {
            softmax_in_place(row);
        }
        self.push(t, Op::Softmax(x), &[x])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::contract(format!("layer_norm eps must be positive, got {eps}")));
        }
        let d = self.value(x).last_dim();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.value(p).numel() != d {
                return Err(Error::shape(format!(
                    "layer_norm {name} of shape {:?} does not match last axis {d}",
                    self.value(p).shape()
                )));
            }
        }
        let xt = self.value(x);
        let rows = xt.outer_len();
        let mut xhat = vec![0.0; xt.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xt.numel()];
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        for r in 0..rows {
            let row = &xt.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(xt.shape().to_vec(), out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if width == 0 || start + width > cols {
            return Err(Error::shape(format!(
                "column slice {start}..{} out of range for {cols} columns",
                start + width
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + width]);
        }
        let t = Tensor::new(vec![rows, width], out)?;
        Ok(self.push(t, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self
            .value(*parts.first().ok_or_else(|| Error::shape("concat of nothing"))?)
            .dims2()?
            .0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::shape(format!("concat_cols: row counts {rows} and {r} differ")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let t = Tensor::new(vec![rows, total], out)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Assembles a new 2-D tensor whose row `i` is row `picks[i].1` of
    /// `sources[picks[i].0]`. All sources must share their column count.
    pub fn gather_rows(&mut self, sources: &[Var], picks: &[(usize, usize)]) -> Result<Var> {
        if picks.is_empty() {
            return Err(Error::shape("gather_rows needs at least one row"));
        }
        let cols = self.value(sources[0]).last_dim();
        for &s in sources {
            let (_, c) = self.value(s).dims2()?;
            if c != cols {
                return Err(Error::shape(format!("gather_rows: column counts {cols} and {c} differ")));
            }
        }
        let mut out = Vec::with_capacity(picks.len() * cols);
        for &(s, r) in picks {
            let src = self.value(*sources.get(s).ok_or_else(|| {
                Error::shape(format!("gather_rows: source {s} out of range"))
            })?);
            if r >= src.outer_len() {
                return Err(Error::shape(format!(
                    "gather_rows: row {r} out of range for {:?}",
                    src.shape()
                )));
            }
            out.extend_from_slice(src.row(r));
        }
        let t = Tensor::new(vec![picks.len(), cols], out)?;
        Ok(self.push(
            t,
            Op::Gather {
                sources: sources.to_vec(),
                picks: picks.to_vec(),
            },
            sources,
        ))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(self.value(x).row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= rows as f64);
        let t = Tensor::new(vec![1, cols], out)?;
        Ok(self.push(t, Op::MeanRows(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        let t = transpose_data(self.value(x).data(), r, c);
        let t = Tensor::new(vec![c, r], t)?;
        Ok(self.push(t, Op::Transpose(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.push(t, Op::Sum(x), &[x])
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).data().iter().map(|v| v * v).sum());
        self.push(t, Op::SumSquares(x), &[x])
    }

    /// Reverse sweep from a scalar loss. Only leaves (inputs and trainable
    /// parameters) keep their gradients in the result.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match node.op {
                Op::Input | Op::Const | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(i, g, &mut grads)?;
        }

        let mut params = Vec::new();
        let mut ids: Vec<_> = self.param_vars.iter().collect();
        ids.sort_by_key(|(id, _)| **id);
        for (&id, &v) in ids {
            if let Some(g) = grads[v.0].take() {
                params.push((id, g));
            }
        }
        let inputs = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Input))
            .map(|(i, _)| (Var(i), grads[i].take()))
            .collect();
        Ok(Gradients { params, inputs })
    }

    fn backprop_node(&self, i: usize, g: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = self.nodes[i].value.as_ref().expect("interior node value");
        match &self.nodes[i].op {
            Op::Input | Op::Const | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let n = self.value(*b).last_dim();
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(*b).data(), true, &mut da, false);
                    self.acc(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(*a).data(), true, g.data(), false, &mut db, false);
                    self.acc(grads, *b, db);
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let n = self.value(*b).dims2()?.0;
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(*b).data(), false, &mut da, false);
                    self.acc(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), true, self.value(*a).data(), false, &mut db, false);
                    self.acc(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.acc(grads, *a, g.data().to_vec());
                }
                if self.needs(*b) {
                    self.acc(grads, *b, g.into_data());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.acc(grads, *a, g.data().to_vec());
                }
                if self.needs(*b) {
                    self.acc(grads, *b, g.data().iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                if self.needs(*a) {
                    self.acc(grads, *a, g.data().iter().zip(tb).map(|(g, y)| g * y).collect());
                }
                if self.needs(*b) {
                    self.acc(grads, *b, g.data().iter().zip(ta).map(|(g, x)| g * x).collect());
                }
            }
            Op::AddBias(x, bias) => {
                if self.needs(*bias) {
                    let d = g.last_dim();
                    let mut db = vec![0.0; d];
                    for row in g.data().chunks(d) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.acc(grads, *bias, db);
                }
                if self.needs(*x) {
                    self.acc(grads, *x, g.into_data());
                }
            }
            Op::Scale(x, s) => {
                self.acc(grads, *x, g.data().iter().map(|v| v * s).collect());
            }
            Op::Gelu(x) => {
                let dx = g
                    .data()
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(g, &x)| g * gelu_derivative(x))
                    .collect();
                self.acc(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let d = out.last_dim();
                let mut dx = vec![0.0; out.numel()];
                for ((dxr, yr), gr) in dx
                    .chunks_mut(d)
                    .zip(out.data().chunks(d))
                    .zip(g.data().chunks(d))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for c in 0..d {
                        dxr[c] = yr[c] * (gr[c] - dot);
                    }
                }
                self.acc(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = out.last_dim();
                let gam = self.value(*gamma).data();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![0.0; d];
                    let mut db = vec![0.0; d];
                    for (gr, hr) in g.data().chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            dg[c] += gr[c] * hr[c];
                            db[c] += gr[c];
                        }
                    }
                    if self.needs(*gamma) {
                        self.acc(grads, *gamma, dg);
                    }
                    if self.needs(*beta) {
                        self.acc(grads, *beta, db);
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; out.numel()];
                    for (r, ((dxr, gr), hr)) in dx
                        .chunks_mut(d)
                        .zip(g.data().chunks(d))
                        .zip(xhat.chunks(d))
                        .enumerate()
                    {
                        let mut mean_gh = 0.0;
                        let mut mean_ghx = 0.0;
                        for c in 0..d {
                            let gh = gr[c] * gam[c];
                            mean_gh += gh;
                            mean_ghx += gh * hr[c];
                        }
                        mean_gh /= d as f64;
                        mean_ghx /= d as f64;
                        for c in 0..d {
                            dxr[c] = rstd[r] * (gr[c] * gam[c] - mean_gh - hr[c] * mean_ghx);
                        }
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.value(*x).dims2()?;
                let w = out.last_dim();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                self.acc(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = out.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    if self.needs(p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        self.acc(grads, p, dp);
                    }
                    offset += w;
                }
            }
            Op::Gather { sources, picks } => {
                let cols = out.last_dim();
                let mut partial: Vec<Option<Vec<f64>>> = vec![None; sources.len()];
                for (i, &(s, r)) in picks.iter().enumerate() {
                    if !self.needs(sources[s]) {
                        continue;
                    }
                    let buf = partial[s]
                        .get_or_insert_with(|| vec![0.0; self.value(sources[s]).numel()]);
                    for (acc, v) in buf[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(&g.data()[i * cols..(i + 1) * cols])
                    {
                        *acc += v;
                    }
                }
                for (s, buf) in partial.into_iter().enumerate() {
                    if let Some(buf) = buf {
                        self.acc(grads, sources[s], buf);
                    }
                }
            }
            Op::MeanRows(x) => {
                let (rows, cols) = self.value(*x).dims2()?;
                let inv = 1.0 / rows as f64;
                let mut dx = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    dx.extend(g.data().iter().map(|v| v * inv));
                }
                self.acc(grads, *x, dx);
            }
            Op::Reshape(x) => {
                self.acc(grads, *x, g.into_data());
            }
            Op::Transpose(x) => {
                let (r, c) = self.value(*x).dims2()?;
                self.acc(grads, *x, transpose_data(g.data(), c, r));
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                self.acc(grads, *x, vec![g.data()[0]; n]);
            }
            Op::SumSquares(x) => {
                let s = 2.0 * g.data()[0];
                self.acc(grads, *x, self.value(*x).data().iter().map(|v| s * v).collect());
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, d) in existing.data_mut().iter_mut().zip(&delta) {
                    *a += d;
                }
            }
            slot @ None => {
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, delta).expect("gradient matches value shape"));
            }
        }
    }
}

/// Gradients produced by one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    params: Vec<(ParamId, Tensor)>,
    inputs: Vec<(Var, Option<Tensor>)>,
}

impl Gradients {
    /// Parameter gradients in ascending parameter order.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(id, g)| (*id, g))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    /// Gradient of an input leaf; `None` when the loss does not depend on it.
    pub fn input(&self, v: Var) -> Option<&Tensor> {
        self.inputs
            .iter()
            .find(|(x, _)| *x == v)
            .and_then(|(_, g)| g.as_ref())
    }
}

pub fn gelu_scalar(x: f64) -> f64 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn transpose_data(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}
