use rand::Rng;

use crate::attention::{window_cross_attention, window_self_attention, AttentionConfig, ProjectionSet};
use crate::error::Result;
use crate::layers::{FeedForward, LayerNorm, Linear};
use crate::model::encoder::residual_norm;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};

/// Masked window self-attention -> Fourier Mix -> window cross attention ->
/// feed-forward, each with residual + layer norm.
#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub self_attention: ProjectionSet,
    pub self_norm: LayerNorm,
    pub mix_norm: LayerNorm,
    pub cross_attention: ProjectionSet,
    pub cross_norm: LayerNorm,
    pub feed_forward: FeedForward,
    pub feed_forward_norm: LayerNorm,
    pub config: AttentionConfig,
}

impl DecoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: AttentionConfig,
        d_ff: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.d_model;
        Ok(DecoderLayer {
            self_attention: ProjectionSet::new(store, &format!("{name}.self_attn"), d, rng)?,
            self_norm: LayerNorm::new(store, &format!("{name}.self_norm"), d)?,
            mix_norm: LayerNorm::new(store, &format!("{name}.mix_norm"), d)?,
            cross_attention: ProjectionSet::new(store, &format!("{name}.cross_attn"), d, rng)?,
            cross_norm: LayerNorm::new(store, &format!("{name}.cross_norm"), d)?,
            feed_forward: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, config.dropout, rng)?,
            feed_forward_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), d)?,
            config,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, memory: Var) -> Result<Var> {
        let a = window_self_attention(tape, &self.self_attention, x, &self.config)?;
        let x = residual_norm(tape, &self.self_norm, x, a)?;
        let m = tape.fourier_mix(x)?;
        let x = residual_norm(tape, &self.mix_norm, x, m)?;
        let c = window_cross_attention(tape, &self.cross_attention, x, memory, &self.config)?;
        let x = residual_norm(tape, &self.cross_norm, x, c)?;
        let f = self.feed_forward.forward(tape, x)?;
        residual_norm(tape, &self.feed_forward_norm, x, f)
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub layers: Vec<DecoderLayer>,
    pub head: Linear,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: AttentionConfig,
        layers: usize,
        d_ff: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| DecoderLayer::new(store, &format!("decoder.layer{i}"), config.clone(), d_ff, rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(store, "decoder.head", config.d_model, out_features, rng)?;
        Ok(Decoder { layers, head })
    }

    /// Runs the decoder stack against the encoder map and projects to
    /// `[Ld, out_features]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, memory: Var) -> Result<Var> {
        let mut x = x;
        for layer in &self.layers {
            x = layer.forward(tape, x, memory)?;
        }
        self.head.forward(tape, x)
    }
}
