//! Scaled dot-product attention and its windowed multi-head variants.
//!
//! Window self-attention splits the sequence into contiguous windows of
//! `window` tokens (the last one may be shorter), attends inside each window
//! independently and concatenates the results in order. Window cross
//! attention splits both the decoder stream and the encoder map into
//! `cross_windows` contiguous chunks and pairs them by index.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Score assigned to masked (future) positions before the softmax.
pub const MASK_VALUE: f64 = -1e30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub window: usize,
    pub causal: bool,
    pub cross_windows: usize,
    pub dropout: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            d_model: 512,
            n_heads: 8,
            window: 12,
            causal: false,
            cross_windows: 3,
            dropout: 0.05,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.window == 0 || self.cross_windows == 0 {
            return Err(Error::Config("window and cross_windows must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Query/key/value projections plus the output projection of one attention
/// sublayer.
#[derive(Clone, Debug)]
pub struct ProjectionSet {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl ProjectionSet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut R) -> Result<Self> {
        Ok(ProjectionSet {
            query: Linear::new(store, &format!("{name}.w_q"), d_model, d_model, rng)?,
            key: Linear::new(store, &format!("{name}.w_k"), d_model, d_model, rng)?,
            value: Linear::new(store, &format!("{name}.w_v"), d_model, d_model, rng)?,
            output: Linear::new(store, &format!("{name}.w_out"), d_model, d_model, rng)?,
        })
    }
}

/// Contiguous windows of `window` tokens covering `0..len`; the final window
/// is shorter when `window` does not divide `len`.
pub fn window_partition(len: usize, window: usize) -> Vec<Range<usize>> {
    let window = window.max(1);
    (0..len).step_by(window).map(|s| s..(s + window).min(len)).collect()
}

/// Pairs decoder windows of `ceil(ld/c)` rows with encoder windows of
/// `ceil(le/c)` rows by index.
pub fn cross_window_pairs(ld: usize, le: usize, c: usize) -> Result<Vec<(Range<usize>, Range<usize>)>> {
    if c == 0 || c > ld.min(le) {
        return Err(Error::Config(format!(
            "cross_windows {c} incompatible with decoder length {ld} and encoder length {le}"
        )));
    }
    let dw = ld.div_ceil(c);
    let ew = le.div_ceil(c);
    let mut pairs = Vec::with_capacity(c);
    for i in 0..c {
        let d = (i * dw).min(ld)..((i + 1) * dw).min(ld);
        let e = (i * ew).min(le)..((i + 1) * ew).min(le);
        if d.is_empty() {
            continue;
        }
        if e.is_empty() {
            return Err(Error::Config(format!(
                "cross window {i} has decoder rows {d:?} but no encoder rows (le={le}, c={c})"
            )));
        }
        pairs.push((d, e));
    }
    Ok(pairs)
}

fn causal_mask(rows: usize, cols: usize) -> Tensor {
    let mut data = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in (i + 1)..cols {
            data[i * cols + j] = MASK_VALUE;
        }
    }
    Tensor::new(&[rows, cols], data).expect("non-empty mask")
}

/// `softmax(Q Kᵀ / sqrt(dh)) V` for one head. Returns the output and the
/// attention weight matrix.
pub fn scaled_dot_attention_with_weights(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    causal: bool,
    dropout: f64,
) -> Result<(Var, Var)> {
    let (qs, ks, vs) = (tape.shape(q).to_vec(), tape.shape(k).to_vec(), tape.shape(v).to_vec());
    if ks[0] != vs[0] {
        return Err(Error::shape("scaled_dot_attention", &ks, &vs));
    }
    if qs[1] != ks[1] {
        return Err(Error::shape("scaled_dot_attention", &qs, &ks));
    }
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let mut scores = tape.scale(scores, 1.0 / (qs[1] as f64).sqrt());
    if causal {
        let mask = tape.constant(causal_mask(qs[0], ks[0]));
        scores = tape.add(scores, mask)?;
    }
    let weights = tape.softmax_rows(scores)?;
    let dropped = tape.dropout(weights, dropout)?;
    let out = tape.matmul(dropped, v)?;
    Ok((out, weights))
}

pub fn scaled_dot_attention(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    causal: bool,
    dropout: f64,
) -> Result<Var> {
    Ok(scaled_dot_attention_with_weights(tape, q, k, v, causal, dropout)?.0)
}

/// Multi-head attention over already-projected `q`, `k`, `v`, restricted to
/// the given (query rows, key rows) pairs. Output rows are concatenated in
/// pair order, heads side by side.
fn attend_pairs(
    tape: &mut Tape<'_>,
    q: Var,
    k: Var,
    v: Var,
    pairs: &[(Range<usize>, Range<usize>)],
    cfg: &AttentionConfig,
    mut weights: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let dh = cfg.head_dim();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let cols = h * dh..(h + 1) * dh;
        let qh = tape.slice_cols(q, cols.start, cols.end)?;
        let kh = tape.slice_cols(k, cols.start, cols.end)?;
        let vh = tape.slice_cols(v, cols.start, cols.end)?;
        let mut chunks = Vec::with_capacity(pairs.len());
        for (qr, kr) in pairs {
            let qw = tape.slice_rows(qh, qr.start, qr.end)?;
            let kw = tape.slice_rows(kh, kr.start, kr.end)?;
            let vw = tape.slice_rows(vh, kr.start, kr.end)?;
            let (out, w) = scaled_dot_attention_with_weights(tape, qw, kw, vw, cfg.causal, cfg.dropout)?;
            if let Some(ws) = weights.as_deref_mut() {
                ws.push(w);
            }
            chunks.push(out);
        }
        heads.push(tape.concat_rows(&chunks)?);
    }
    tape.concat_cols(&heads)
}

fn self_attention_impl(
    tape: &mut Tape<'_>,
    proj: &ProjectionSet,
    x: Var,
    cfg: &AttentionConfig,
    weights: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let len = tape.shape(x)[0];
    if len == 0 {
        return Err(Error::invalid("window_self_attention", "empty sequence"));
    }
    let q = proj.query.forward(tape, x)?;
    let k = proj.key.forward(tape, x)?;
    let v = proj.value.forward(tape, x)?;
    let pairs: Vec<_> = window_partition(len, cfg.window)
        .into_iter()
        .map(|w| (w.clone(), w))
        .collect();
    let merged = attend_pairs(tape, q, k, v, &pairs, cfg, weights)?;
    proj.output.forward(tape, merged)
}

/// Multi-head window self-attention on `[L, d_model]`.
pub fn window_self_attention(tape: &mut Tape<'_>, proj: &ProjectionSet, x: Var, cfg: &AttentionConfig) -> Result<Var> {
    self_attention_impl(tape, proj, x, cfg, None)
}

/// Like [`window_self_attention`], also returning every per-window, per-head
/// weight matrix (heads outer, windows inner).
pub fn window_self_attention_with_weights(
    tape: &mut Tape<'_>,
    proj: &ProjectionSet,
    x: Var,
    cfg: &AttentionConfig,
) -> Result<(Var, Vec<Var>)> {
    let mut weights = Vec::new();
    let out = self_attention_impl(tape, proj, x, cfg, Some(&mut weights))?;
    Ok((out, weights))
}

/// Full (single-window) multi-head self-attention with the same weights.
pub fn full_self_attention(tape: &mut Tape<'_>, proj: &ProjectionSet, x: Var, cfg: &AttentionConfig) -> Result<Var> {
    let len = tape.shape(x)[0];
    let cfg = AttentionConfig {
        window: len.max(1),
        ..cfg.clone()
    };
    self_attention_impl(tape, proj, x, &cfg, None)
}

/// Window cross attention: decoder queries against paired encoder windows.
/// Never causal.
pub fn window_cross_attention(
    tape: &mut Tape<'_>,
    proj: &ProjectionSet,
    queries_in: Var,
    kv_in: Var,
    cfg: &AttentionConfig,
) -> Result<Var> {
    let ld = tape.shape(queries_in)[0];
    let le = tape.shape(kv_in)[0];
    let pairs = cross_window_pairs(ld, le, cfg.cross_windows)?;
    let q = proj.query.forward(tape, queries_in)?;
    let k = proj.key.forward(tape, kv_in)?;
    let v = proj.value.forward(tape, kv_in)?;
    let cfg = AttentionConfig {
        causal: false,
        ..cfg.clone()
    };
    let merged = attend_pairs(tape, q, k, v, &pairs, &cfg, None)?;
    proj.output.forward(tape, merged)
}

/// Perturbs every row after `t` with seeded noise and reports whether rows
/// `0..=t` of `model_fn`'s output stay bit-identical.
pub fn causality_probe<F>(model_fn: F, x: &Tensor, t: usize, seed: u64) -> Result<bool>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let base = model_fn(x)?;
    let cols = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed = x.clone().into_data();
    for v in perturbed.iter_mut().skip((t + 1) * cols) {
        *v += rng.gen_range(-1.0..1.0);
    }
    let moved = model_fn(&Tensor::new(x.shape(), perturbed)?)?;
    let out_cols = base.cols();
    let keep = (t + 1) * out_cols;
    Ok(base.data()[..keep]
        .iter()
        .zip(&moved.data()[..keep])
        .all(|(a, b)| a.to_bits() == b.to_bits()))
}
