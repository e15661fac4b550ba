//! The FWin encoder-decoder.
//!
//! Encoder: embedding, then per layer window self-attention and Fourier
//! mixing, with a distilling step between layers. Decoder: embedding of the
//! label rows plus horizon placeholders, masked window self-attention,
//! Fourier mixing, window cross attention to the encoder map, and a linear
//! head. The last `horizon` rows of the head output are the forecast.

pub mod config;
pub mod decoder;
pub mod embed;
pub mod encoder;

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{FWinConfig, Task, CALENDAR_FEATURES};
pub use decoder::{Decoder, DecoderLayer};
pub use embed::{calendar_features, calendar_matrix, positional_encoding, Embedding};
pub use encoder::{Distill, Encoder, EncoderLayer};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::param::{GradMap, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Intermediate handles from one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    pub encoder_map: Var,
    pub decoder_input: Var,
    pub decoder_output: Var,
    pub forecast: Var,
}

#[derive(Clone, Debug)]
pub struct FWin {
    config: FWinConfig,
    params: ParamStore,
    encoder_embedding: Embedding,
    decoder_embedding: Embedding,
    encoder: Encoder,
    decoder: Decoder,
}

impl FWin {
    /// Builds the model with Xavier-uniform projections and zero biases drawn
    /// from `seed`.
    pub fn new(config: FWinConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        let encoder_embedding = Embedding::new(&mut params, "encoder.embed", config.in_features, d, config.dropout, &mut rng)?;
        let decoder_embedding = Embedding::new(&mut params, "decoder.embed", config.in_features, d, config.dropout, &mut rng)?;
        let encoder = Encoder::new(&mut params, config.encoder_attention(), config.enc_layers, config.d_ff, &mut rng)?;
        let decoder = Decoder::new(
            &mut params,
            config.decoder_attention(),
            config.dec_layers,
            config.d_ff,
            config.out_features,
            &mut rng,
        )?;
        Ok(FWin {
            config,
            params,
            encoder_embedding,
            decoder_embedding,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &FWinConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn check_sample(&self, sample: &WindowSample) -> Result<()> {
        let c = &self.config;
        if sample.task != c.task {
            return Err(Error::Config(format!(
                "sample built for task {} but model configured for {}",
                sample.task, c.task
            )));
        }
        let expect_enc = [c.seq_len, c.in_features];
        if sample.encoder_block.shape() != expect_enc {
            return Err(Error::shape("fwin_forward", &expect_enc, sample.encoder_block.shape()));
        }
        let expect_dec = [c.decoder_len(), c.in_features];
        if sample.decoder_placeholder.shape() != expect_dec {
            return Err(Error::shape("fwin_forward", &expect_dec, sample.decoder_placeholder.shape()));
        }
        Ok(())
    }

    pub fn encode(&self, tape: &mut Tape<'_>, block: &Tensor, calendar: &Tensor) -> Result<Var> {
        let raw = tape.constant(block.clone());
        let cal = tape.constant(calendar.clone());
        let x = self.encoder_embedding.forward(tape, raw, cal)?;
        self.encoder.forward(tape, x)
    }

    pub fn embed_decoder(&self, tape: &mut Tape<'_>, block: &Tensor, calendar: &Tensor) -> Result<Var> {
        let raw = tape.constant(block.clone());
        let cal = tape.constant(calendar.clone());
        self.decoder_embedding.forward(tape, raw, cal)
    }

    pub fn forward_trace(&self, tape: &mut Tape<'_>, sample: &WindowSample) -> Result<ForwardTrace> {
        self.check_sample(sample)?;
        let encoder_map = self.encode(tape, &sample.encoder_block, &sample.encoder_calendar)?;
        let decoder_input = self.embed_decoder(tape, &sample.decoder_placeholder, &sample.decoder_calendar)?;
        let decoder_output = self.decoder.forward(tape, decoder_input, encoder_map)?;
        let ld = tape.shape(decoder_output)[0];
        let forecast = tape.slice_rows(decoder_output, ld - self.config.horizon, ld)?;
        Ok(ForwardTrace {
            encoder_map,
            decoder_input,
            decoder_output,
            forecast,
        })
    }

    /// Forecast `[horizon, out_features]` for one sample.
    pub fn forward(&self, tape: &mut Tape<'_>, sample: &WindowSample) -> Result<Var> {
        Ok(self.forward_trace(tape, sample)?.forecast)
    }

    /// Mean squared error of the forecast against the sample target.
    pub fn loss(&self, tape: &mut Tape<'_>, sample: &WindowSample) -> Result<Var> {
        let pred = self.forward(tape, sample)?;
        let target = tape.constant(sample.target.clone());
        let err = tape.sub(pred, target)?;
        let sq = tape.mul(err, err)?;
        Ok(tape.mean_all(sq))
    }

    /// Eval-mode forecast.
    pub fn predict(&self, sample: &WindowSample) -> Result<Tensor> {
        let mut tape = Tape::with_params(&self.params);
        let out = self.forward(&mut tape, sample)?;
        Ok(tape.value(out).clone())
    }

    /// Loss and parameter gradients for one sample. `dropout_seed` switches
    /// the tape to training mode.
    pub fn sample_gradients(&self, sample: &WindowSample, dropout_seed: Option<u64>) -> Result<(f64, GradMap)> {
        let mut tape = Tape::with_params(&self.params);
        if let Some(seed) = dropout_seed {
            tape = tape.training(seed);
        }
        let loss = self.loss(&mut tape, sample)?;
        let value = tape.value(loss).item();
        let grads = tape.backward(loss)?.into_params();
        Ok((value, grads))
    }

    /// Writes the parameter snapshot to `path` and the configuration to the
    /// sidecar returned by [`sidecar_path`].
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.params.to_snapshot_bytes())?;
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.config)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: FWinConfig = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let snapshot = ParamStore::read_snapshot(fs::File::open(path)?)?;
        let mut model = FWin::new(config, 0)?;
        model.params.load_values(&snapshot)?;
        Ok(model)
    }
}

/// `model.bin` -> `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
