use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::{Duration, NaiveDate};
use fwin_core::data::synthetic::{lagged_driver_frame, write_sd_like_dataset, DriverTask};
use fwin_core::data::{
    apply_stats, build_sample, compute_stats, format_sig9, ingest, make_samples, prepare, Manifest, NormStats, Prepared,
    Split, WeeklyFrame, WindowShape,
};
use fwin_core::model::{FWin, FWinConfig, Task};
use fwin_core::par::threads_from_env;
use fwin_core::training::{evaluate_detailed, history_csv, metrics_csv, multi_run, MultiRunReport};
use fwin_core::Error;
use log::{info, warn};
use serde_json::json;

use crate::args::{Overrides, SynthKind};
use crate::config::RunConfig;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INGESTION: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_FORECAST: i32 = 5;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

trait WithCode<T> {
    fn code(self, code: i32) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for std::result::Result<T, E> {
    fn code(self, code: i32) -> CmdResult<T> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: i32, msg: String) -> CmdResult<T> {
    Err(Failure {
        code,
        error: anyhow!(msg),
    })
}

/// Data problems are mismatches; anything else (I/O) is generic.
fn data_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_OTHER,
        _ => EXIT_MISMATCH,
    }
}

fn write(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .code(EXIT_OTHER)
}

fn prepare_out(config: &RunConfig) -> CmdResult {
    config.echo().code(EXIT_OTHER)
}

fn load_frame(config: &RunConfig) -> CmdResult<WeeklyFrame> {
    let path = config.data_path().code(EXIT_OTHER)?;
    WeeklyFrame::read_csv(path, &config.response).map_err(|e| Failure {
        code: data_code(&e),
        error: anyhow::Error::new(e).context(format!("loading {}", path.display())),
    })
}

fn window_shape(c: &FWinConfig) -> WindowShape {
    WindowShape {
        seq_len: c.seq_len,
        horizon: c.horizon,
        label_len: c.label_len,
    }
}

/// Model configuration for `frame`: feature count taken from the data.
fn model_config(config: &RunConfig, frame: &WeeklyFrame) -> CmdResult<FWinConfig> {
    let model = FWinConfig {
        in_features: frame.features(),
        ..config.model.clone()
    };
    model.validate().code(EXIT_MISMATCH)?;
    Ok(model)
}

pub fn cmd_ingest(config: &RunConfig, manifest: &Path) -> CmdResult {
    prepare_out(config)?;
    let manifest = Manifest::load(manifest)
        .with_context(|| format!("loading manifest {}", manifest.display()))
        .code(EXIT_INGESTION)?;
    let (frame, reports) = ingest(&manifest).code(EXIT_INGESTION)?;
    let stats = compute_stats(&frame, config.norm_scope).code(EXIT_INGESTION)?;
    for r in &reports {
        println!("{}: {} observations, {}", r.feature, r.observations, r.rule);
    }
    let csv_path = config.out.join("aligned.csv");
    frame.write_csv(&csv_path).code(EXIT_OTHER)?;
    write(&config.out.join("stats.json"), &stats.to_json().code(EXIT_OTHER)?)?;
    println!(
        "wrote {} ({} weeks x {} features, {} to {})",
        csv_path.display(),
        frame.weeks(),
        frame.features(),
        frame.dates()[0],
        frame.dates()[frame.weeks() - 1]
    );
    Ok(())
}

fn run_summary(report: &MultiRunReport) -> serde_json::Value {
    let best = report.best_run();
    json!({
        "task": report.task,
        "horizon": report.horizon,
        "mean": report.aggregate.mean,
        "std": report.aggregate.std,
        "checkpoint_run": best.run,
        "runs": report.runs.iter().map(|r| json!({
            "run": r.run,
            "seed": r.seed,
            "best_epoch": r.outcome.best_epoch,
            "best_val_mse": r.outcome.best_val,
            "epochs_run": r.outcome.history.len(),
            "stopped_early": r.outcome.stopped_early,
            "test": r.test,
        })).collect::<Vec<_>>(),
    })
}

pub fn cmd_train(config: &RunConfig) -> CmdResult {
    prepare_out(config)?;
    let frame = load_frame(config)?;
    let model_cfg = model_config(config, &frame)?;
    config.plan.validate().code(EXIT_MISMATCH)?;
    let data = prepare(&frame, config.norm_scope, model_cfg.task, window_shape(&model_cfg)).code(EXIT_MISMATCH)?;
    info!(
        "training {} run(s) on {} / {} / {} samples",
        config.plan.runs,
        data.samples.train.len(),
        data.samples.val.len(),
        data.samples.test.len()
    );
    let report = multi_run(&model_cfg, &data.samples, &config.plan, threads_from_env()).code(EXIT_TRAINING)?;

    let out = &config.out;
    write(&out.join("metrics.csv"), &metrics_csv(&report))?;
    for r in &report.runs {
        write(&out.join(format!("history_run{}.csv", r.run)), &history_csv(&r.outcome.history))?;
    }
    let best = report.best_run();
    write(&out.join("history.csv"), &history_csv(&best.outcome.history))?;
    best.outcome.model.save(&out.join("model.bin")).code(EXIT_OTHER)?;
    write(&out.join("stats.json"), &data.stats.to_json().code(EXIT_OTHER)?)?;
    let summary = serde_json::to_string_pretty(&run_summary(&report)).code(EXIT_OTHER)?;
    write(&out.join("summary.json"), &(summary + "\n"))?;

    for r in &report.runs {
        println!(
            "run {} (seed {}): test mse {:.6} mae {:.6} max_ae {:.6}",
            r.run, r.seed, r.test.mse, r.test.mae, r.test.max_ae
        );
    }
    let m = report.aggregate.mean;
    let s = report.aggregate.std;
    println!(
        "mean over {} run(s): mse {:.6} (sd {:.6}) mae {:.6} (sd {:.6}) max_ae {:.6} (sd {:.6})",
        report.runs.len(),
        m.mse,
        s.mse,
        m.mae,
        s.mae,
        m.max_ae,
        s.max_ae
    );
    Ok(())
}

/// Model plus the normalization statistics saved next to it.
fn load_checkpoint(path: &Path, overrides: &Overrides) -> CmdResult<(FWin, PathBuf)> {
    let model = FWin::load(path)
        .map_err(|e| Failure {
            code: data_code(&e),
            error: anyhow::Error::new(e).context(format!("loading checkpoint {}", path.display())),
        })?;
    let c = model.config();
    let actual = [
        ("horizon", c.horizon),
        ("seq_len", c.seq_len),
        ("window", c.window),
        ("label_len", c.label_len),
    ];
    for ((name, flag), (_, have)) in overrides.shape_flags().iter().zip(actual) {
        if let Some(v) = flag {
            if *v != have {
                return fail(
                    EXIT_MISMATCH,
                    format!("--{} {v} does not match the checkpoint ({name} = {have})", name.replace('_', "-")),
                );
            }
        }
    }
    if let Some(task) = overrides.task {
        if task != c.task {
            return fail(EXIT_MISMATCH, format!("--task {task} does not match the checkpoint (task = {})", c.task));
        }
    }
    let stats_path = path.parent().unwrap_or(Path::new(".")).join("stats.json");
    Ok((model, stats_path))
}

fn normalized_for(model: &FWin, frame: &WeeklyFrame, stats_path: &Path) -> CmdResult<(WeeklyFrame, NormStats)> {
    if frame.features() != model.config().in_features {
        return fail(
            EXIT_MISMATCH,
            format!(
                "checkpoint expects {} features, data has {}",
                model.config().in_features,
                frame.features()
            ),
        );
    }
    let text = fs::read_to_string(stats_path)
        .with_context(|| format!("reading {}", stats_path.display()))
        .code(EXIT_MISMATCH)?;
    let stats = NormStats::from_json(&text, frame.names()).code(EXIT_MISMATCH)?;
    let normalized = apply_stats(frame, &stats).code(EXIT_MISMATCH)?;
    Ok((normalized, stats))
}

pub fn cmd_eval(config: &RunConfig, overrides: &Overrides, checkpoint: &Path, split: Split) -> CmdResult {
    prepare_out(config)?;
    let (model, stats_path) = load_checkpoint(checkpoint, overrides)?;
    let frame = load_frame(config)?;
    let (normalized, _) = normalized_for(&model, &frame, &stats_path)?;
    let c = model.config();
    let ranges = fwin_core::data::split_6_2_2(normalized.weeks()).code(EXIT_MISMATCH)?;
    let samples = make_samples(&normalized, ranges.get(split), c.task, window_shape(c)).code(EXIT_MISMATCH)?;
    let (overall, steps) = evaluate_detailed(&model, &samples).code(EXIT_MISMATCH)?;

    let mut csv = String::from("split,task,horizon,samples,mse,mae,max_ae\n");
    let _ = writeln!(
        csv,
        "{split},{},{},{},{},{},{}",
        c.task,
        c.horizon,
        samples.len(),
        overall.mse,
        overall.mae,
        overall.max_ae
    );
    write(&config.out.join("eval_metrics.csv"), &csv)?;
    let mut per_step = String::from("step,mse,mae,max_ae\n");
    for (h, m) in steps.iter().enumerate() {
        let _ = writeln!(per_step, "{},{},{},{}", h + 1, m.mse, m.mae, m.max_ae);
    }
    write(&config.out.join("eval_steps.csv"), &per_step)?;
    println!(
        "{split}: {} samples, mse {:.6} mae {:.6} max_ae {:.6}",
        samples.len(),
        overall.mse,
        overall.mae,
        overall.max_ae
    );
    Ok(())
}

pub fn cmd_forecast(config: &RunConfig, overrides: &Overrides, checkpoint: &Path, origin: Option<NaiveDate>) -> CmdResult {
    prepare_out(config)?;
    let (model, stats_path) = load_checkpoint(checkpoint, overrides)?;
    let frame = load_frame(config)?;
    let (normalized, stats) = normalized_for(&model, &frame, &stats_path)?;
    let c = model.config();

    let origin = origin.unwrap_or(frame.dates()[frame.weeks() - 1]);
    let Some(origin_row) = frame.week_index(origin) else {
        return fail(EXIT_FORECAST, format!("origin {origin} is not a week in the data"));
    };
    if origin_row + 1 < c.seq_len {
        return fail(
            EXIT_FORECAST,
            format!("origin {origin} has {} weeks of history, {} needed", origin_row + 1, c.seq_len),
        );
    }
    let available = frame.weeks() - origin_row - 1;
    if c.task == Task::Mm && available < c.horizon {
        return fail(
            EXIT_FORECAST,
            format!(
                "task mm needs {} weeks of future covariates after {origin}, only {available} available",
                c.horizon
            ),
        );
    }
    let sample = build_sample(&normalized, origin_row + 1 - c.seq_len, c.task, window_shape(c), true)
        .code(EXIT_FORECAST)?;
    let pred = model.predict(&sample).code(EXIT_FORECAST)?;

    let response = frame.response_name();
    let rs = stats
        .get(response)
        .ok_or_else(|| anyhow!("no statistics for `{response}`"))
        .code(EXIT_MISMATCH)?;
    let mut csv = format!("week_start,predicted_{response}\n");
    for (h, z) in pred.data().iter().enumerate() {
        let week = origin + Duration::days(7 * (h as i64 + 1));
        let _ = writeln!(csv, "{},{}", week.format("%Y-%m-%d"), rs.denormalize(*z));
    }
    let path = config.out.join("forecast.csv");
    write(&path, &csv)?;
    println!("wrote {} ({} weeks after {origin})", path.display(), c.horizon);
    Ok(())
}

pub fn cmd_ablate_window(config: &RunConfig, windows: &[usize], tasks: &[Task], horizons: &[usize]) -> CmdResult {
    if let Some(w) = windows.iter().find(|&&w| w == 0 || w > config.model.seq_len) {
        return fail(
            EXIT_MISMATCH,
            format!("window {w} must lie in 1..={} (seq_len)", config.model.seq_len),
        );
    }
    prepare_out(config)?;
    let frame = load_frame(config)?;
    config.plan.validate().code(EXIT_MISMATCH)?;
    let threads = threads_from_env();

    let mut cells = String::from("window,task,horizon,runs,seed,mse,mae,max_ae,mse_std,error\n");
    let mut per_run = String::from("window,task,horizon,run,seed,mse,mae,max_ae\n");
    let mut prepared: BTreeMap<(Task, usize), Result<Prepared, String>> = BTreeMap::new();
    for &window in windows {
        for &task in tasks {
            for &horizon in horizons {
                let cell = RunConfig {
                    model: FWinConfig {
                        window,
                        task,
                        horizon,
                        ..config.model.clone()
                    },
                    ..config.clone()
                };
                let result = model_config(&cell, &frame)
                    .map_err(|f| f.error.to_string())
                    .and_then(|mc| {
                        let data = prepared
                            .entry((task, horizon))
                            .or_insert_with(|| {
                                prepare(&frame, cell.norm_scope, task, window_shape(&mc)).map_err(|e| e.to_string())
                            })
                            .as_ref()
                            .map_err(Clone::clone)?;
                        multi_run(&mc, &data.samples, &cell.plan, threads).map_err(|e| e.to_string())
                    });
                match result {
                    Ok(report) => {
                        let (m, s) = (report.aggregate.mean, report.aggregate.std);
                        let _ = writeln!(
                            cells,
                            "{window},{task},{horizon},{},{},{},{},{},{},",
                            report.runs.len(),
                            config.plan.seed,
                            m.mse,
                            m.mae,
                            m.max_ae,
                            s.mse
                        );
                        for r in &report.runs {
                            let _ = writeln!(
                                per_run,
                                "{window},{task},{horizon},{},{},{},{},{}",
                                r.run, r.seed, r.test.mse, r.test.mae, r.test.max_ae
                            );
                        }
                        println!("window {window} task {task} horizon {horizon}: mse {:.6}", m.mse);
                    }
                    Err(msg) => {
                        warn!("cell window={window} task={task} horizon={horizon} failed: {msg}");
                        let msg = msg.replace([',', '\n'], ";");
                        let _ = writeln!(
                            cells,
                            "{window},{task},{horizon},{},{},,,,,{msg}",
                            config.plan.runs, config.plan.seed
                        );
                    }
                }
            }
        }
    }
    write(&config.out.join("ablation.csv"), &cells)?;
    write(&config.out.join("ablation_runs.csv"), &per_run)?;
    Ok(())
}

pub fn cmd_export_series(config: &RunConfig, columns: &[String]) -> CmdResult {
    prepare_out(config)?;
    let frame = load_frame(config)?;
    let columns: Vec<String> = if columns.is_empty() {
        let preferred = ["avg_temperature", "precipitation", frame.response_name()];
        let present: Vec<String> = preferred
            .iter()
            .filter(|c| frame.column_index(c).is_some())
            .map(|c| c.to_string())
            .collect();
        if present.len() == preferred.len() {
            present
        } else {
            frame.names().to_vec()
        }
    } else {
        columns.to_vec()
    };
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            frame
                .column_index(c)
                .ok_or_else(|| anyhow!("no column `{c}` in the data"))
                .code(EXIT_MISMATCH)
        })
        .collect::<CmdResult<_>>()?;
    let ranges = fwin_core::data::split_6_2_2(frame.weeks()).code(EXIT_MISMATCH)?;
    let mut csv = format!("week_start,{},split\n", columns.join(","));
    for t in 0..frame.weeks() {
        csv.push_str(&frame.dates()[t].format("%Y-%m-%d").to_string());
        for &j in &idx {
            csv.push(',');
            csv.push_str(&format_sig9(frame.get(t, j)));
        }
        let _ = writeln!(csv, ",{}", ranges.label(t));
    }
    let path = config.out.join("series.csv");
    write(&path, &csv)?;
    println!("wrote {} ({} weeks)", path.display(), frame.weeks());
    Ok(())
}

pub fn cmd_synth(config: &RunConfig, kind: SynthKind, weeks: usize) -> CmdResult {
    prepare_out(config)?;
    match kind {
        SynthKind::Climate => {
            let manifest = write_sd_like_dataset(&config.out, weeks, config.plan.seed).code(EXIT_OTHER)?;
            println!("wrote {}", manifest.display());
        }
        SynthKind::Driver => {
            let frame = lagged_driver_frame(DriverTask {
                weeks,
                seed: config.plan.seed,
                ..Default::default()
            })
            .code(EXIT_OTHER)?;
            let path = config.out.join("driver.csv");
            frame.write_csv(&path).code(EXIT_OTHER)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
