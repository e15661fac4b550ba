use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::frame::WeeklyFrame;
use crate::data::split::split_6_2_2;
use crate::error::{Error, Result};

/// Which rows the z-score statistics come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    /// Every row, as in the reference setup. Leaks test statistics into training.
    #[default]
    Full,
    /// Training rows only.
    #[serde(alias = "train")]
    TrainOnly,
}

impl fmt::Display for NormScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormScope::Full => "full",
            NormScope::TrainOnly => "train",
        })
    }
}

impl FromStr for NormScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(NormScope::Full),
            "train" | "train_only" => Ok(NormScope::TrainOnly),
            other => Err(Error::Config(format!("unknown norm scope `{other}` (expected full or train)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-feature mean and population standard deviation, in column order.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub names: Vec<String>,
    pub stats: Vec<FeatureStats>,
}

impl NormStats {
    pub fn get(&self, name: &str) -> Option<FeatureStats> {
        self.names.iter().position(|n| n == name).map(|i| self.stats[i])
    }

    /// `{feature: {mean, std}}`.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, FeatureStats> = self
            .names
            .iter()
            .map(String::as_str)
            .zip(self.stats.iter().copied())
            .collect();
        Ok(serde_json::to_string_pretty(&map)? + "\n")
    }

    pub fn from_json(text: &str, order: &[String]) -> Result<Self> {
        let map: BTreeMap<String, FeatureStats> = serde_json::from_str(text)?;
        let stats = order
            .iter()
            .map(|n| {
                map.get(n)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("no statistics for `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NormStats {
            names: order.to_vec(),
            stats,
        })
    }
}

/// Computes z-score statistics over the rows selected by `scope`.
pub fn compute_stats(frame: &WeeklyFrame, scope: NormScope) -> Result<NormStats> {
    let rows = match scope {
        NormScope::Full => 0..frame.weeks(),
        NormScope::TrainOnly => split_6_2_2(frame.weeks())?.train,
    };
    let n = rows.len() as f64;
    let mut stats = Vec::with_capacity(frame.features());
    for (j, name) in frame.names().iter().enumerate() {
        let col: Vec<f64> = rows.clone().map(|t| frame.get(t, j)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("feature `{name}` contains non-finite values")));
        }
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::Data(format!("feature `{name}` has zero variance")));
        }
        stats.push(FeatureStats { mean, std: var.sqrt() });
    }
    Ok(NormStats {
        names: frame.names().to_vec(),
        stats,
    })
}

pub fn apply_stats(frame: &WeeklyFrame, stats: &NormStats) -> Result<WeeklyFrame> {
    if stats.names != frame.names() {
        return Err(Error::Data("statistics do not match the frame's features".into()));
    }
    let f = frame.features();
    let values = frame
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.stats[i % f].normalize(v))
        .collect();
    Ok(frame.with_values(values))
}

/// Z-scores every column with population statistics from `scope`.
pub fn normalize(frame: &WeeklyFrame, scope: NormScope) -> Result<(WeeklyFrame, NormStats)> {
    let stats = compute_stats(frame, scope)?;
    Ok((apply_stats(frame, &stats)?, stats))
}

pub fn denormalize(frame: &WeeklyFrame, stats: &NormStats) -> Result<WeeklyFrame> {
    if stats.names != frame.names() {
        return Err(Error::Data("statistics do not match the frame's features".into()));
    }
    let f = frame.features();
    let values = frame
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.stats[i % f].denormalize(v))
        .collect();
    Ok(frame.with_values(values))
}
