use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fwin_core::data::{NormScope, Split};
use fwin_core::model::Task;
use fwin_core::training::LrMode;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "fwin", version, args_override_self = true, about = "Long-horizon weekly forecasting with window attention and Fourier mixing")]
pub struct Cli {
    /// Flat JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override `RunConfig` keys.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed; run k uses seed + k.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `ms` (history only) or `mm` (future covariates known).
    #[arg(long, global = true)]
    pub task: Option<Task>,
    /// Encoder input length in weeks.
    #[arg(long, global = true)]
    pub seq_len: Option<usize>,
    /// Forecast length in weeks.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Self-attention window size.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Number of seeded training runs.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// `full` or `train`.
    #[arg(long, global = true)]
    pub norm_scope: Option<NormScope>,
    /// Aligned weekly CSV.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long, global = true)]
    pub response: Option<String>,
    /// Model width.
    #[arg(long, global = true)]
    pub d_model: Option<usize>,
    /// Feed-forward hidden width.
    #[arg(long, global = true)]
    pub d_ff: Option<usize>,
    /// Attention heads.
    #[arg(long, global = true)]
    pub n_heads: Option<usize>,
    /// Encoder layers.
    #[arg(long, global = true)]
    pub enc_layers: Option<usize>,
    /// Decoder layers.
    #[arg(long, global = true)]
    pub dec_layers: Option<usize>,
    /// Number of paired windows in cross attention.
    #[arg(long, global = true)]
    pub cross_windows: Option<usize>,
    /// Dropout probability.
    #[arg(long, global = true)]
    pub dropout: Option<f64>,
    /// Observed weeks given to the decoder before the horizon.
    #[arg(long, global = true)]
    pub label_len: Option<usize>,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long, global = true)]
    pub patience: Option<usize>,
    /// Training batch size.
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Learning rate at epoch 0.
    #[arg(long, global = true)]
    pub initial_lr: Option<f64>,
    /// Per-epoch learning-rate factor in `halving` mode.
    #[arg(long, global = true)]
    pub decay: Option<f64>,
    /// `halving` or `constant`.
    #[arg(long, global = true)]
    pub lr_mode: Option<LrMode>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if let Some(out) = &self.out {
            c.out = out.clone();
        }
        if let Some(data) = &self.data {
            c.data = Some(data.clone());
        }
        set(&mut c.response, &self.response);
        set(&mut c.norm_scope, &self.norm_scope);
        set(&mut c.plan.seed, &self.seed);
        set(&mut c.plan.runs, &self.runs);
        set(&mut c.plan.epochs, &self.epochs);
        set(&mut c.plan.patience, &self.patience);
        set(&mut c.plan.batch_size, &self.batch_size);
        set(&mut c.plan.initial_lr, &self.initial_lr);
        set(&mut c.plan.decay, &self.decay);
        set(&mut c.plan.lr_mode, &self.lr_mode);
        set(&mut c.model.task, &self.task);
        set(&mut c.model.seq_len, &self.seq_len);
        set(&mut c.model.horizon, &self.horizon);
        set(&mut c.model.window, &self.window);
        set(&mut c.model.d_model, &self.d_model);
        set(&mut c.model.d_ff, &self.d_ff);
        set(&mut c.model.n_heads, &self.n_heads);
        set(&mut c.model.enc_layers, &self.enc_layers);
        set(&mut c.model.dec_layers, &self.dec_layers);
        set(&mut c.model.cross_windows, &self.cross_windows);
        set(&mut c.model.dropout, &self.dropout);
        set(&mut c.model.label_len, &self.label_len);
    }

    /// Flags that describe the model shape; `eval` and `forecast` reject
    /// values that disagree with the checkpoint.
    pub fn shape_flags(&self) -> [(&'static str, Option<usize>); 4] {
        [
            ("horizon", self.horizon),
            ("seq_len", self.seq_len),
            ("window", self.window),
            ("label_len", self.label_len),
        ]
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align raw series from a manifest onto the weekly grid.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train `runs` seeded models and report test metrics.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_eval_split)]
        split: Split,
    },
    /// Forecast the `horizon` weeks after an origin week.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Last observed week; defaults to the final week of the data.
        #[arg(long)]
        origin: Option<NaiveDate>,
    },
    /// Sweep window size x task x horizon.
    AblateWindow {
        #[arg(long, value_delimiter = ',', default_value = "4,6,12,18,36")]
        windows: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "ms")]
        tasks: Vec<Task>,
        #[arg(long, value_delimiter = ',', default_value = "24,36,48,60")]
        horizons: Vec<usize>,
    },
    /// Write selected columns with their split label for plotting.
    ExportSeries {
        /// Columns to export; defaults to temperature, precipitation and the
        /// response when present, otherwise every column.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, value_enum, default_value = "climate")]
        kind: SynthKind,
        #[arg(long, default_value_t = 1000)]
        weeks: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Raw mixed-resolution series for 13 climate features plus a manifest.
    Climate,
    /// Aligned CSV where the response is a lagged function of two drivers.
    Driver,
}

fn parse_eval_split(s: &str) -> Result<Split, String> {
    match s {
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("split must be val or test, got `{other}`")),
    }
}
