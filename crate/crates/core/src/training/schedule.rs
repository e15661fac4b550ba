use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrMode {
    /// `initial_lr * decay^epoch`.
    #[default]
    Halving,
    Constant,
}

impl FromStr for LrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halving" => Ok(LrMode::Halving),
            "constant" => Ok(LrMode::Constant),
            other => Err(Error::Config(format!("unknown lr mode `{other}` (expected halving or constant)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub decay: f64,
    pub lr_mode: LrMode,
    pub runs: usize,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs: 6,
            patience: 3,
            batch_size: 32,
            initial_lr: 1e-4,
            decay: 0.5,
            lr_mode: LrMode::Halving,
            runs: 5,
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.runs == 0 {
            return fail("epochs, batch_size and runs must be positive".into());
        }
        if self.patience > self.epochs {
            return fail(format!("patience {} exceeds epochs {}", self.patience, self.epochs));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr >= 0.0) {
            return fail(format!("initial_lr must be finite and non-negative, got {}", self.initial_lr));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        Ok(())
    }

    /// Seed of run `run` (0-based): consecutive from `seed`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        lr_schedule(self, epoch)
    }
}

pub fn lr_schedule(plan: &TrainPlan, epoch: usize) -> f64 {
    match plan.lr_mode {
        LrMode::Halving => plan.initial_lr * plan.decay.powi(epoch as i32),
        LrMode::Constant => plan.initial_lr,
    }
}
