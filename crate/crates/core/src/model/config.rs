use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{cross_window_pairs, AttentionConfig};
use crate::error::{Error, Result};

/// Supervised task convention.
///
/// `Ms`: past values of every feature in, future response out; the horizon
/// rows of the decoder input are all zero. `Mm`: as `Ms`, but the horizon
/// rows carry the known future covariates and only the response is zeroed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ms,
    Mm,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ms => "ms",
            Task::Mm => "mm",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Task::Ms),
            "mm" => Ok(Task::Mm),
            other => Err(Error::Config(format!("unknown task `{other}` (expected ms or mm)"))),
        }
    }
}

/// Number of calendar features per time step: month, day of month, ISO week.
pub const CALENDAR_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FWinConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub window: usize,
    pub cross_windows: usize,
    pub dropout: f64,
    pub seq_len: usize,
    pub horizon: usize,
    pub label_len: usize,
    pub in_features: usize,
    pub out_features: usize,
    pub task: Task,
}

impl Default for FWinConfig {
    fn default() -> Self {
        FWinConfig {
            d_model: 512,
            d_ff: 2048,
            n_heads: 8,
            enc_layers: 2,
            dec_layers: 1,
            window: 12,
            cross_windows: 3,
            dropout: 0.05,
            seq_len: 36,
            horizon: 24,
            label_len: 18,
            in_features: 13,
            out_features: 1,
            task: Task::Ms,
        }
    }
}

impl FWinConfig {
    /// Small configuration for gradient checks and fast experiments.
    pub fn shrunken() -> Self {
        FWinConfig {
            d_model: 16,
            d_ff: 32,
            n_heads: 2,
            window: 4,
            seq_len: 12,
            horizon: 4,
            label_len: 6,
            ..Default::default()
        }
    }

    pub fn decoder_len(&self) -> usize {
        self.label_len + self.horizon
    }

    /// Length of the encoder feature map after the distilling layers.
    pub fn encoder_out_len(&self) -> usize {
        (1..self.enc_layers.max(1)).fold(self.seq_len, |len, _| len.div_ceil(2))
    }

    fn attention(&self, causal: bool) -> AttentionConfig {
        AttentionConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            window: self.window,
            causal,
            cross_windows: self.cross_windows,
            dropout: self.dropout,
        }
    }

    pub fn encoder_attention(&self) -> AttentionConfig {
        self.attention(false)
    }

    pub fn decoder_attention(&self) -> AttentionConfig {
        self.attention(true)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_attention().validate()?;
        if self.seq_len == 0 || self.horizon == 0 || self.in_features == 0 || self.out_features == 0 {
            return Err(Error::Config(
                "seq_len, horizon, in_features and out_features must be >= 1".into(),
            ));
        }
        if self.label_len > self.seq_len {
            return Err(Error::Config(format!(
                "label_len {} exceeds seq_len {}",
                self.label_len, self.seq_len
            )));
        }
        if self.enc_layers == 0 {
            return Err(Error::Config("enc_layers must be >= 1".into()));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be >= 1".into()));
        }
        if self.dec_layers > 0 {
            cross_window_pairs(self.decoder_len(), self.encoder_out_len(), self.cross_windows)?;
        }
        Ok(())
    }
}
