use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::FWin;
use crate::par;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub max_ae: f64,
}

/// Errors over paired points, accumulated in order.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<MetricReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape("metrics", &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Data("metrics over an empty set".into()));
    }
    let mut acc = Accumulator::default();
    for (p, t) in pred.iter().zip(truth) {
        acc.push(p - t);
    }
    Ok(acc.finish())
}

#[derive(Default)]
struct Accumulator {
    sq: f64,
    abs: f64,
    max: f64,
    n: usize,
}

impl Accumulator {
    fn push(&mut self, e: f64) {
        self.sq += e * e;
        self.abs += e.abs();
        self.max = self.max.max(e.abs());
        self.n += 1;
    }

    fn finish(&self) -> MetricReport {
        MetricReport {
            mse: self.sq / self.n as f64,
            mae: self.abs / self.n as f64,
            max_ae: self.max,
        }
    }
}

/// Eval-mode forecasts for every sample, in input order.
pub fn predictions(model: &FWin, samples: &[WindowSample]) -> Result<Vec<Tensor>> {
    par::map(samples, |s| model.predict(s)).into_iter().collect()
}

/// Metrics over every horizon point of every sample.
pub fn evaluate(model: &FWin, samples: &[WindowSample]) -> Result<MetricReport> {
    Ok(evaluate_detailed(model, samples)?.0)
}

/// Overall metrics plus one report per horizon step.
pub fn evaluate_detailed(model: &FWin, samples: &[WindowSample]) -> Result<(MetricReport, Vec<MetricReport>)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty sample set".into()));
    }
    let preds = predictions(model, samples)?;
    let n = samples[0].target.numel();
    let mut overall = Accumulator::default();
    let mut steps: Vec<Accumulator> = (0..n).map(|_| Accumulator::default()).collect();
    for (p, s) in preds.iter().zip(samples) {
        for (h, (a, b)) in p.data().iter().zip(s.target.data()).enumerate() {
            overall.push(a - b);
            steps[h % n].push(a - b);
        }
    }
    Ok((overall.finish(), steps.iter().map(Accumulator::finish).collect()))
}

/// Mean and sample standard deviation of each metric across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: MetricReport,
    pub std: MetricReport,
}

pub fn aggregate(reports: &[MetricReport]) -> Result<Aggregate> {
    if reports.is_empty() {
        return Err(Error::Data("cannot aggregate zero runs".into()));
    }
    let k = reports.len() as f64;
    let stat = |f: fn(&MetricReport) -> f64| -> (f64, f64) {
        let mean = reports.iter().map(f).sum::<f64>() / k;
        if reports.len() == 1 {
            return (mean, 0.0);
        }
        // deviations from the first run, so identical runs give exactly 0
        let shift = f(&reports[0]);
        let s1 = reports.iter().map(|r| f(r) - shift).sum::<f64>();
        let s2 = reports.iter().map(|r| (f(r) - shift).powi(2)).sum::<f64>();
        let var = ((s2 - s1 * s1 / k) / (k - 1.0)).max(0.0);
        (mean, var.sqrt())
    };
    let (mse, mse_sd) = stat(|r| r.mse);
    let (mae, mae_sd) = stat(|r| r.mae);
    let (max_ae, max_sd) = stat(|r| r.max_ae);
    Ok(Aggregate {
        mean: MetricReport { mse, mae, max_ae },
        std: MetricReport {
            mse: mse_sd,
            mae: mae_sd,
            max_ae: max_sd,
        },
    })
}
