use rand::Rng;

use crate::attention::{window_self_attention, AttentionConfig, ProjectionSet};
use crate::error::Result;
use crate::layers::{FeedForward, LayerNorm, Linear};
use crate::param::ParamStore;
use crate::tape::{Tape, Var};

/// Convolution (kernel 3, zero padding 1) -> ELU -> max-pool (kernel 3,
/// stride 2, padding 1). Halves the sequence length, rounding up.
#[derive(Clone, Debug)]
pub struct Distill {
    // [3 * d_model, d_model]: rows are the taps for t-1, t, t+1
    pub conv: Linear,
}

impl Distill {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut R) -> Result<Self> {
        Ok(Distill {
            conv: Linear::new(store, &format!("{name}.conv"), 3 * d_model, d_model, rng)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let len = tape.shape(x)[0];
        let padded = tape.pad_rows(x, 1, 1)?;
        let prev = tape.slice_rows(padded, 0, len)?;
        let next = tape.slice_rows(padded, 2, len + 2)?;
        let taps = tape.concat_cols(&[prev, x, next])?;
        let conv = self.conv.forward(tape, taps)?;
        let act = tape.elu(conv);
        tape.max_pool_time(act)
    }
}

/// Window self-attention block followed by Fourier mixing, each sublayer
/// wrapped in a residual connection and layer norm.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: ProjectionSet,
    pub attention_norm: LayerNorm,
    pub feed_forward: FeedForward,
    pub feed_forward_norm: LayerNorm,
    pub mix_norm: LayerNorm,
    pub config: AttentionConfig,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: AttentionConfig,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.d_model;
        Ok(EncoderLayer {
            attention: ProjectionSet::new(store, &format!("{name}.attn"), d, rng)?,
            attention_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), d)?,
            feed_forward: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, config.dropout, rng)?,
            feed_forward_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), d)?,
            mix_norm: LayerNorm::new(store, &format!("{name}.mix_norm"), d)?,
            config,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let a = window_self_attention(tape, &self.attention, x, &self.config)?;
        let x = residual_norm(tape, &self.attention_norm, x, a)?;
        let f = self.feed_forward.forward(tape, x)?;
        let x = residual_norm(tape, &self.feed_forward_norm, x, f)?;
        let m = tape.fourier_mix(x)?;
        residual_norm(tape, &self.mix_norm, x, m)
    }
}

pub(crate) fn residual_norm(tape: &mut Tape<'_>, norm: &LayerNorm, x: Var, branch: Var) -> Result<Var> {
    let sum = tape.add(x, branch)?;
    norm.forward(tape, sum)
}

/// Encoder layers with one distilling step between consecutive layers.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub distills: Vec<Distill>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: AttentionConfig,
        layers: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc = Encoder {
            layers: Vec::with_capacity(layers),
            distills: Vec::with_capacity(layers.saturating_sub(1)),
        };
        for i in 0..layers {
            enc.layers
                .push(EncoderLayer::new(store, &format!("encoder.layer{i}"), config.clone(), d_ff, rng)?);
            if i + 1 < layers {
                enc.distills
                    .push(Distill::new(store, &format!("encoder.distill{i}"), config.d_model, rng)?);
            }
        }
        Ok(enc)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let mut x = x;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, x)?;
            if let Some(d) = self.distills.get(i) {
                x = d.forward(tape, x)?;
            }
        }
        Ok(x)
    }
}
