//! Dense row-major `f64` tensors of rank 1 to 3 and the forward kernels the
//! tape builds on. Every operation returns a fresh tensor; inputs are never
//! mutated.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} values]", self.shape, self.data.len())
        }
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::invalid("tensor", format!("unsupported rank {}", shape.len())));
        }
        if shape.contains(&0) {
            return Err(Error::invalid("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n]).expect("valid shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(&[n], data).expect("non-empty vector")
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid("from_rows", "ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(&[rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row count of a matrix (second-to-last extent, or 1 for a vector).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            r => self.shape[r - 2],
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape("dot", &self.shape, &other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Adds a row vector `[C]` to every row of `[.., R, C]`.
    pub fn add_row(&self, bias: &Tensor) -> Result<Self> {
        let c = self.cols();
        if bias.numel() != c || bias.rank() != 1 {
            return Err(Error::shape("add_row", &self.shape, &bias.shape));
        }
        let mut out = self.clone();
        for chunk in out.data.chunks_mut(c) {
            for (a, b) in chunk.iter_mut().zip(&bias.data) {
                *a += b;
            }
        }
        Ok(out)
    }

    fn batch_and_matrix(&self) -> (usize, usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, 1, *n),
            [r, c] => (1, *r, *c),
            [b, r, c] => (*b, *r, *c),
            _ => unreachable!("rank checked at construction"),
        }
    }

    /// Matrix product over the last two axes. A rank-3 operand is a batch of
    /// matrices; an unbatched operand is broadcast against it.
    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        if self.rank() < 2 || other.rank() < 2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (ba, m, k) = self.batch_and_matrix();
        let (bb, k2, n) = other.batch_and_matrix();
        if k != k2 || (ba != bb && ba != 1 && bb != 1) {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let batch = ba.max(bb);
        let mut out = vec![0.0; batch * m * n];
        for b in 0..batch {
            let a = &self.data[(if ba == 1 { 0 } else { b }) * m * k..][..m * k];
            let bm = &other.data[(if bb == 1 { 0 } else { b }) * k * n..][..k * n];
            let o = &mut out[b * m * n..(b + 1) * m * n];
            matmul_into(a, bm, o, m, k, n);
        }
        let shape = if batch > 1 || self.rank() == 3 || other.rank() == 3 {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        Tensor::new(&shape, out)
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Self {
        let (batch, r, c) = self.batch_and_matrix();
        if self.rank() == 1 {
            return Tensor {
                shape: vec![self.numel(), 1],
                data: self.data.clone(),
            };
        }
        let mut data = vec![0.0; self.numel()];
        for b in 0..batch {
            let src = &self.data[b * r * c..(b + 1) * r * c];
            let dst = &mut data[b * r * c..(b + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        Tensor { shape, data }
    }

    /// Softmax along the last axis, stabilized by subtracting each row's max.
    pub fn softmax_rows(&self) -> Result<Self> {
        if self.data.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite { op: "softmax_rows" });
        }
        let c = self.cols();
        let mut out = self.data.clone();
        for row in out.chunks_mut(c) {
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
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    fn axis_layout(&self, axis: usize) -> (usize, usize, usize) {
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }

    fn reduced_shape(&self, axis: usize, keep_dim: bool) -> Vec<usize> {
        let mut shape = self.shape.clone();
        if keep_dim || shape.len() == 1 {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        shape
    }

    fn check_axis(&self, op: &'static str, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::invalid(op, format!("axis {axis} out of range for rank {}", self.rank())));
        }
        Ok(())
    }

    pub fn sum_axis(&self, axis: usize, keep_dim: bool) -> Result<Self> {
        self.check_axis("sum", axis)?;
        let (outer, len, inner) = self.axis_layout(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += self.data[(o * len + a) * inner + i];
                }
            }
        }
        Tensor::new(&self.reduced_shape(axis, keep_dim), out)
    }

    pub fn mean_axis(&self, axis: usize, keep_dim: bool) -> Result<Self> {
        let len = self.shape.get(axis).copied().unwrap_or(1) as f64;
        Ok(self.sum_axis(axis, keep_dim)?.scale(1.0 / len))
    }

    /// Max along `axis` plus the flat source index of each winner. Ties go to
    /// the first index.
    pub fn max_axis(&self, axis: usize, keep_dim: bool) -> Result<(Self, Vec<usize>)> {
        self.check_axis("max", axis)?;
        let (outer, len, inner) = self.axis_layout(axis);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let slot = o * inner + i;
                for a in 0..len {
                    let idx = (o * len + a) * inner + i;
                    if a == 0 || self.data[idx] > out[slot] {
                        out[slot] = self.data[idx];
                        arg[slot] = idx;
                    }
                }
            }
        }
        Ok((Tensor::new(&self.reduced_shape(axis, keep_dim), out)?, arg))
    }

    fn check_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::invalid(op, format!("expected a matrix, got {:?}", self.shape))),
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.check_matrix("slice_rows")?;
        if start >= end || end > r {
            return Err(Error::invalid("slice_rows", format!("range {start}..{end} for {r} rows")));
        }
        Tensor::new(&[end - start, c], self.data[start * c..end * c].to_vec())
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.check_matrix("slice_cols")?;
        if start >= end || end > c {
            return Err(Error::invalid("slice_cols", format!("range {start}..{end} for {c} cols")));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.data[i * c + start..i * c + end]);
        }
        Tensor::new(&[r, w], data)
    }

    pub fn concat_rows(parts: &[&Tensor]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat_rows", "no inputs"))?;
        let (_, c) = first.check_matrix("concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (r, pc) = p.check_matrix("concat_rows")?;
            if pc != c {
                return Err(Error::shape("concat_rows", &first.shape, &p.shape));
            }
            rows += r;
            data.extend_from_slice(&p.data);
        }
        Tensor::new(&[rows, c], data)
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat_cols", "no inputs"))?;
        let (r, _) = first.check_matrix("concat_cols")?;
        let mut cols = 0;
        for p in parts {
            let (pr, pc) = p.check_matrix("concat_cols")?;
            if pr != r {
                return Err(Error::shape("concat_cols", &first.shape, &p.shape));
            }
            cols += pc;
        }
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Tensor::new(&[r, cols], data)
    }

    /// Surrounds a matrix with `before` and `after` rows of zeros.
    pub fn pad_rows(&self, before: usize, after: usize) -> Result<Self> {
        let (r, c) = self.check_matrix("pad_rows")?;
        let mut data = vec![0.0; (before + r + after) * c];
        data[before * c..(before + r) * c].copy_from_slice(&self.data);
        Tensor::new(&[before + r + after, c], data)
    }
}

/// `out += a[m×k] · b[k×n]`, i-k-j loop order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
