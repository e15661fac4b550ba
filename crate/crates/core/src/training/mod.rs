//! Adam with a per-epoch halving schedule, early stopping on validation MSE,
//! evaluation metrics and seeded multi-run averaging.

pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod trainer;

use std::fmt::Write as _;

pub use metrics::{aggregate, evaluate, evaluate_detailed, metrics, predictions, Aggregate, MetricReport};
pub use optim::{adam_step, OptimizerState};
pub use schedule::{lr_schedule, LrMode, TrainPlan};
pub use trainer::{derive_seed, train, train_with, EpochRecord, TrainOutcome};

pub use crate::data::SplitSamples;

use crate::error::{Error, Result};
use crate::model::{FWin, FWinConfig, Task};
use crate::par;

#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub test: MetricReport,
}

#[derive(Clone, Debug)]
pub struct MultiRunReport {
    pub task: Task,
    pub horizon: usize,
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

impl MultiRunReport {
    /// The run with the lowest best validation loss (earliest on ties).
    pub fn best_run(&self) -> &RunResult {
        self.runs
            .iter()
            .min_by(|a, b| a.outcome.best_val.total_cmp(&b.outcome.best_val))
            .expect("at least one run")
    }
}

/// One run: initialize from the run seed, train, evaluate on the test split.
pub fn single_run(config: &FWinConfig, data: &SplitSamples, plan: &TrainPlan, run: usize) -> Result<RunResult> {
    let seed = plan.run_seed(run);
    let run_plan = TrainPlan { seed, ..plan.clone() };
    let model = FWin::new(config.clone(), seed)?;
    let outcome = train(model, &data.train, &data.val, &run_plan)?;
    let test = evaluate(&outcome.model, &data.test)?;
    Ok(RunResult {
        run,
        seed,
        outcome,
        test,
    })
}

/// `plan.runs` independent runs with seeds `seed..seed + runs`, executed in
/// parallel on at most `threads` workers and reported in run order.
pub fn multi_run(config: &FWinConfig, data: &SplitSamples, plan: &TrainPlan, threads: Option<usize>) -> Result<MultiRunReport> {
    plan.validate()?;
    let results = par::with_threads(threads, || {
        par::map_range(plan.runs, |run| single_run(config, data, plan, run))
    });
    let mut runs = Vec::with_capacity(plan.runs);
    for (run, r) in results.into_iter().enumerate() {
        runs.push(r.map_err(|e| Error::Run {
            run,
            source: Box::new(e),
        })?);
    }
    let tests: Vec<MetricReport> = runs.iter().map(|r| r.test).collect();
    Ok(MultiRunReport {
        task: config.task,
        horizon: config.horizon,
        aggregate: aggregate(&tests)?,
        runs,
    })
}

pub const METRICS_HEADER: &str = "run,seed,task,horizon,mse,mae,max_ae";
pub const HISTORY_HEADER: &str = "epoch,train_mse,val_mse,lr";

/// One row per run, plus a `mean` row when there is more than one run.
pub fn metrics_csv(report: &MultiRunReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in &report.runs {
        let m = r.test;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.run, r.seed, report.task, report.horizon, m.mse, m.mae, m.max_ae
        );
    }
    if report.runs.len() > 1 {
        let m = report.aggregate.mean;
        let _ = writeln!(
            out,
            "mean,,{},{},{},{},{}",
            report.task, report.horizon, m.mse, m.mae, m.max_ae
        );
    }
    out
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{}", h.epoch, h.train_mse, h.val_mse, h.lr);
    }
    out
}
