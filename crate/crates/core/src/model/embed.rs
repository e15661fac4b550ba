use chrono::{Datelike, NaiveDate};
use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::model::config::CALENDAR_FEATURES;
use crate::param::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Fixed sinusoidal encoding: `sin` on even columns, `cos` on odd ones, with
/// wavelengths growing geometrically up to `10000 * 2π`.
pub fn positional_encoding(len: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; len * d_model];
    for pos in 0..len {
        for i in (0..d_model).step_by(2) {
            let freq = (-(i as f64) * (10000f64).ln() / d_model as f64).exp();
            let angle = pos as f64 * freq;
            data[pos * d_model + i] = angle.sin();
            if i + 1 < d_model {
                data[pos * d_model + i + 1] = angle.cos();
            }
        }
    }
    Tensor::new(&[len, d_model], data).expect("non-empty encoding")
}

/// Month, day of month and ISO week, each mapped onto `[-0.5, 0.5]`.
pub fn calendar_features(date: NaiveDate) -> [f64; CALENDAR_FEATURES] {
    let scale = |v: u32, max: u32| (v - 1) as f64 / (max - 1) as f64 - 0.5;
    [
        scale(date.month(), 12),
        scale(date.day(), 31),
        scale(date.iso_week().week(), 53),
    ]
}

pub fn calendar_matrix(dates: &[NaiveDate]) -> Tensor {
    let rows: Vec<[f64; CALENDAR_FEATURES]> = dates.iter().map(|&d| calendar_features(d)).collect();
    Tensor::from_rows(&rows).expect("non-empty calendar")
}

/// Value projection + positional encoding + calendar projection.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub value: Linear,
    pub calendar: Linear,
    pub d_model: usize,
    pub dropout: f64,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_features: usize,
        d_model: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Embedding {
            value: Linear::new(store, &format!("{name}.value"), in_features, d_model, rng)?,
            calendar: Linear::new(store, &format!("{name}.calendar"), CALENDAR_FEATURES, d_model, rng)?,
            d_model,
            dropout,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, raw: Var, calendar: Var) -> Result<Var> {
        let len = tape.shape(raw)[0];
        if tape.shape(calendar)[0] != len {
            return Err(Error::shape("embed", tape.shape(raw), tape.shape(calendar)));
        }
        let values = self.value.forward(tape, raw)?;
        let pe = tape.constant(positional_encoding(len, self.d_model));
        let with_pos = tape.add(values, pe)?;
        let cal = self.calendar.forward(tape, calendar)?;
        let sum = tape.add(with_pos, cal)?;
        tape.dropout(sum, self.dropout)
    }
}
