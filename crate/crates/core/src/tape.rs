//! Reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied during one forward pass in
//! creation order, which is already a topological order. [`Tape::backward`]
//! walks it once in reverse. A tape lives for a single forward/backward pair
//! and borrows the parameter store read-only, so several tapes can run over
//! the same parameters on different threads.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft;
use crate::param::{GradMap, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Param,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddRow,
    Elu,
    Gelu,
    Relu,
    Softmax,
    Sum,
    Mean,
    Max,
    SumAll,
    MeanAll,
    Transpose,
    SliceRows,
    SliceCols,
    ConcatRows,
    ConcatCols,
    PadRows,
    LayerNorm,
    FourierMix,
    MaxPoolTime,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Elu(Var),
    Gelu(Var),
    Relu(Var),
    Softmax(Var),
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    Max { x: Var, argmax: Vec<usize> },
    SumAll(Var),
    MeanAll(Var),
    Transpose(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    PadRows { x: Var, before: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64> },
    FourierMix(Var),
    MaxPoolTime { x: Var, argmax: Vec<usize> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Elu(_) => OpKind::Elu,
            Op::Gelu(_) => OpKind::Gelu,
            Op::Relu(_) => OpKind::Relu,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mean { .. } => OpKind::Mean,
            Op::Max { .. } => OpKind::Max,
            Op::SumAll(_) => OpKind::SumAll,
            Op::MeanAll(_) => OpKind::MeanAll,
            Op::Transpose(_) => OpKind::Transpose,
            Op::SliceRows { .. } => OpKind::SliceRows,
            Op::SliceCols { .. } => OpKind::SliceCols,
            Op::ConcatRows(_) => OpKind::ConcatRows,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::PadRows { .. } => OpKind::PadRows,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::FourierMix(_) => OpKind::FourierMix,
            Op::MaxPoolTime { .. } => OpKind::MaxPoolTime,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::Scale(x, _)
            | Op::Elu(x)
            | Op::Gelu(x)
            | Op::Relu(x)
            | Op::Softmax(x)
            | Op::SumAll(x)
            | Op::MeanAll(x)
            | Op::Transpose(x)
            | Op::FourierMix(x) => vec![*x],
            Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::Max { x, .. }
            | Op::SliceRows { x, .. }
            | Op::SliceCols { x, .. }
            | Op::PadRows { x, .. }
            | Op::MaxPoolTime { x, .. } => vec![*x],
            Op::ConcatRows(v) | Op::ConcatCols(v) => v.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Result of a backward pass: gradients for every tracked node plus the
/// per-parameter map.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: GradMap,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn params(&self) -> &GradMap {
        &self.params
    }

    pub fn into_params(self) -> GradMap {
        self.params
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Tape<'p> {
    nodes: Vec<Node>,
    store: Option<&'p ParamStore>,
    param_vars: BTreeMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Default for Tape<'static> {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape<'static> {
    /// A tape with no parameter store, for standalone expressions.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            store: None,
            param_vars: BTreeMap::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl<'p> Tape<'p> {
    pub fn with_params(store: &'p ParamStore) -> Self {
        Tape {
            nodes: Vec::new(),
            store: Some(store),
            param_vars: BTreeMap::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Enables dropout, drawing masks from a generator seeded with `seed`.
    pub fn training(mut self, seed: u64) -> Self {
        self.training = true;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    pub fn inputs(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => other.inputs().iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// A value treated as constant by backward.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Brings a stored parameter onto the tape; repeated calls return the same
    /// node so gradients from every use accumulate in one place.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("tape has no parameter store");
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).scale(s);
        self.push(out, Op::Scale(x, s))
    }

    /// Adds a `[C]` bias to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = self.value(x).add_row(self.value(bias))?;
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(elu);
        self.push(out, Op::Elu(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).softmax_rows()?;
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Sum along `axis`; the reduced extent is kept as 1 when `keep_dim`.
    pub fn sum(&mut self, x: Var, axis: usize, keep_dim: bool) -> Result<Var> {
        let out = self.value(x).sum_axis(axis, keep_dim)?;
        Ok(self.push(out, Op::Sum { x, axis }))
    }

    pub fn mean(&mut self, x: Var, axis: usize, keep_dim: bool) -> Result<Var> {
        let out = self.value(x).mean_axis(axis, keep_dim)?;
        Ok(self.push(out, Op::Mean { x, axis }))
    }

    /// Max along `axis`. Backward sends the gradient to the first maximum.
    pub fn max(&mut self, x: Var, axis: usize, keep_dim: bool) -> Result<Var> {
        let (out, argmax) = self.value(x).max_axis(axis, keep_dim)?;
        Ok(self.push(out, Op::Max { x, argmax }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(out, Op::MeanAll(x))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(x).slice_rows(start, end)?;
        Ok(self.push(out, Op::SliceRows { x, start }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(x).slice_cols(start, end)?;
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&values)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&values)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn pad_rows(&mut self, x: Var, before: usize, after: usize) -> Result<Var> {
        let out = self.value(x).pad_rows(before, after)?;
        Ok(self.push(out, Op::PadRows { x, before }))
    }

    /// Normalizes each row of `[L, C]` to zero mean and unit variance, then
    /// applies the `[C]` affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.numel() != c || b.numel() != c {
            return Err(Error::shape("layer_norm", xv.shape(), g.shape()));
        }
        let mut xhat = xv.clone().into_data();
        let mut inv_std = Vec::with_capacity(xhat.len() / c);
        for row in xhat.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let xhat = Tensor::new(xv.shape(), xhat)?;
        let mut out = xhat.clone().into_data();
        for row in out.chunks_mut(c) {
            for ((v, gv), bv) in row.iter_mut().zip(g.data()).zip(b.data()) {
                *v = *v * gv + bv;
            }
        }
        let out = Tensor::new(xv.shape(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn fourier_mix(&mut self, x: Var) -> Result<Var> {
        let out = fft::fourier_mix(self.value(x))?;
        Ok(self.push(out, Op::FourierMix(x)))
    }

    /// Max-pool along the row (time) axis with kernel 3, stride 2 and one
    /// padding row on each side: `[L, C] -> [ceil(L/2), C]`.
    pub fn max_pool_time(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let [len, c] = *xv.shape() else {
            return Err(Error::invalid("max_pool_time", format!("expected [L, C], got {:?}", xv.shape())));
        };
        let out_len = (len + 2 - 3) / 2 + 1;
        let mut out = vec![0.0; out_len * c];
        let mut argmax = vec![0usize; out_len * c];
        for o in 0..out_len {
            let lo = (2 * o).saturating_sub(1);
            let hi = (2 * o + 1).min(len - 1);
            for j in 0..c {
                let mut best = lo * c + j;
                for i in lo + 1..=hi {
                    if xv.data()[i * c + j] > xv.data()[best] {
                        best = i * c + j;
                    }
                }
                out[o * c + j] = xv.data()[best];
                argmax[o * c + j] = best;
            }
        }
        let out = Tensor::new(&[out_len, c], out)?;
        Ok(self.push(out, Op::MaxPoolTime { x, argmax }))
    }

    /// Inverted dropout. Identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !self.training || p <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let shape = self.shape(x).to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.constant(Tensor::new(&shape, mask)?);
        self.mul(x, mask)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        let mut params = GradMap::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            if let Op::Param(id) = node.op {
                params.insert(id, g.clone());
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |v: Var, contribution: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    let ga = g.matmul(&bv.transpose())?;
                    send(*a, reduce_to(ga, av.shape())?);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = av.transpose().matmul(g)?;
                    send(*b, reduce_to(gb, bv.shape())?);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                send(*a, g.mul(self.value(*b))?);
                send(*b, g.mul(self.value(*a))?);
            }
            Op::Scale(x, s) => send(*x, g.scale(*s)),
            Op::AddRow(x, bias) => {
                send(*x, g.clone());
                let c = g.cols();
                let mut gb = vec![0.0; c];
                for row in g.data().chunks(c) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                send(*bias, Tensor::new(self.value(*bias).shape(), gb)?);
            }
            Op::Elu(x) => {
                let d = self.value(*x).map(|v| if v > 0.0 { 1.0 } else { v.exp() });
                send(*x, g.mul(&d)?);
            }
            Op::Gelu(x) => {
                let d = self.value(*x).map(gelu_derivative);
                send(*x, g.mul(&d)?);
            }
            Op::Relu(x) => {
                let d = self.value(*x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                send(*x, g.mul(&d)?);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let c = y.cols();
                let mut dx = vec![0.0; y.numel()];
                for ((dr, yr), gr) in dx.chunks_mut(c).zip(y.data().chunks(c)).zip(g.data().chunks(c)) {
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - inner);
                    }
                }
                send(*x, Tensor::new(y.shape(), dx)?);
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let xs = self.value(*x).shape();
                let outer: usize = xs[..*axis].iter().product();
                let len = xs[*axis];
                let inner: usize = xs[axis + 1..].iter().product();
                let s = if matches!(node.op, Op::Mean { .. }) { 1.0 / len as f64 } else { 1.0 };
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        for i in 0..inner {
                            dx[(o * len + a) * inner + i] = g.data()[o * inner + i] * s;
                        }
                    }
                }
                send(*x, Tensor::new(xs, dx)?);
            }
            Op::Max { x, argmax } | Op::MaxPoolTime { x, argmax } => {
                let xv = self.value(*x);
                let mut dx = vec![0.0; xv.numel()];
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    dx[src] += gv;
                }
                send(*x, Tensor::new(xv.shape(), dx)?);
            }
            Op::SumAll(x) => {
                send(*x, Tensor::full(self.value(*x).shape(), g.item()));
            }
            Op::MeanAll(x) => {
                let xv = self.value(*x);
                send(*x, Tensor::full(xv.shape(), g.item() / xv.numel() as f64));
            }
            Op::Transpose(x) => send(*x, g.transpose()),
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let after = xv.rows() - start - g.rows();
                send(*x, g.pad_rows(*start, after)?);
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (r, c, w) = (xv.rows(), xv.cols(), g.cols());
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                send(*x, Tensor::new(xv.shape(), dx)?);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    send(p, g.slice_rows(offset, offset + r)?);
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    send(p, g.slice_cols(offset, offset + c)?);
                    offset += c;
                }
            }
            Op::PadRows { x, before } => {
                let r = self.value(*x).rows();
                send(*x, g.slice_rows(*before, before + r)?);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = xhat.cols();
                let gv = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; xhat.numel()];
                for (r, ((gr, xr), dr)) in g
                    .data()
                    .chunks(c)
                    .zip(xhat.data().chunks(c))
                    .zip(dx.chunks_mut(c))
                    .enumerate()
                {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..c {
                        dgamma[j] += gr[j] * xr[j];
                        dbeta[j] += gr[j];
                        let dxhat = gr[j] * gv[j];
                        sum_d += dxhat;
                        sum_dx += dxhat * xr[j];
                    }
                    let k = inv_std[r] / c as f64;
                    for j in 0..c {
                        let dxhat = gr[j] * gv[j];
                        dr[j] = k * (c as f64 * dxhat - sum_d - xr[j] * sum_dx);
                    }
                }
                send(*x, Tensor::new(xhat.shape(), dx)?);
                send(*gamma, Tensor::new(self.value(*gamma).shape(), dgamma)?);
                send(*beta, Tensor::new(self.value(*beta).shape(), dbeta)?);
            }
            Op::FourierMix(x) => send(*x, fft::fourier_mix_backward(g)?),
        }
        Ok(())
    }
}

/// Sums a broadcast matmul gradient back down to the operand's shape.
fn reduce_to(g: Tensor, shape: &[usize]) -> Result<Tensor> {
    if g.shape() == shape {
        return Ok(g);
    }
    let summed = g.sum_axis(0, shape.len() == 3)?;
    if summed.shape() != shape {
        return Err(Error::shape("matmul_backward", g.shape(), shape));
    }
    Ok(summed)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![1.0, -2.0]));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum_all(sq);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn matmul_sum_gradients_match_formula() {
        let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[[5.0, 6.0, 7.0], [8.0, 9.0, 10.0]]).unwrap();
        let mut t = Tape::new();
        let (va, vb) = (t.input(a.clone()), t.input(b.clone()));
        let p = t.matmul(va, vb).unwrap();
        let loss = t.sum_all(p);
        let g = t.backward(loss).unwrap();
        let ones = Tensor::ones(&[2, 3]);
        assert_eq!(g.wrt(va).unwrap(), &ones.matmul(&b.transpose()).unwrap());
        assert_eq!(g.wrt(vb).unwrap(), &a.transpose().matmul(&ones).unwrap());
    }

    #[test]
    fn max_backward_routes_to_argmax() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![1.0, 3.0, 2.0]));
        let m = t.max(x, 0, false).unwrap();
        let loss = t.sum_all(m);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn elu_is_continuous_with_unit_slope_at_zero() {
        assert_eq!(elu(0.0), 0.0);
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![0.0, -1e-300, 1e-300]));
        let y = t.elu(x);
        let loss = t.sum_all(y);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_parameters_get_no_gradient() {
        let mut store = ParamStore::new();
        let used = store.register("used", Tensor::vector(vec![2.0])).unwrap();
        let unused = store.register("unused", Tensor::vector(vec![3.0])).unwrap();
        let mut t = Tape::with_params(&store);
        let u = t.param(used);
        let _ = t.param(unused);
        let loss = t.sum_all(u);
        let grads = t.backward(loss).unwrap().into_params();
        assert!(grads.get(unused).is_none());
        store.accumulate(&grads);
        store.accumulate(&grads);
        assert_eq!(store.get(used).grad.data(), &[2.0]);
        assert_eq!(store.get(unused).grad.data(), &[0.0]);
    }

    #[test]
    fn max_pool_lengths_and_values() {
        for (len, expect) in [(36, 18), (18, 9), (9, 5), (1, 1), (2, 1), (3, 2)] {
            let mut t = Tape::new();
            let x = t.constant(Tensor::zeros(&[len, 2]));
            let y = t.max_pool_time(x).unwrap();
            assert_eq!(t.shape(y), &[expect, 2]);
        }
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[[1.0], [5.0], [2.0], [2.0], [7.0]]).unwrap());
        let y = t.max_pool_time(x).unwrap();
        // windows {0,1}, {1,2,3}, {3,4}
        assert_eq!(t.value(y).data(), &[5.0, 5.0, 7.0]);
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut t = Tape::new();
        let x = t.input(Tensor::ones(&[3, 3]));
        assert_eq!(t.dropout(x, 0.5).unwrap(), x);
        let mut t = Tape::new().training(1);
        let x = t.input(Tensor::ones(&[50, 50]));
        let y = t.dropout(x, 0.5).unwrap();
        let v = t.value(y);
        assert!(v.data().iter().all(|&e| e == 0.0 || e == 2.0));
        let kept = v.data().iter().filter(|&&e| e > 0.0).count();
        assert!(kept > 1000 && kept < 1500, "{kept}");
    }

    #[test]
    fn node_introspection() {
        let mut t = Tape::new();
        let a = t.input(Tensor::vector(vec![1.0]));
        let c = t.constant(Tensor::vector(vec![2.0]));
        let s = t.add(a, c).unwrap();
        assert_eq!(t.op_kind(s), OpKind::Add);
        assert_eq!(t.inputs(s), vec![a, c]);
        assert!(t.requires_grad(s));
        assert!(!t.requires_grad(c));
    }
}
