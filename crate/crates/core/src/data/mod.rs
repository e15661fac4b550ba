//! Weekly data pipeline: manifest-driven ingestion of mixed-resolution
//! series, z-score normalization, the chronological 6/2/2 split and the
//! sliding-window sample builders for the MS and MM tasks.

pub mod dataset;
pub mod frame;
pub mod manifest;
pub mod normalize;
pub mod resample;
pub mod sample;
pub mod split;
pub mod synthetic;

pub use dataset::{prepare, Prepared, SplitSamples};
pub use frame::{format_sig9, ingest, quantize, IngestReport, WeeklyFrame};
pub use manifest::{read_series, FeatureSpec, Manifest, MissingRule, Observation, Resolution, WeeklyRule};
pub use normalize::{apply_stats, compute_stats, denormalize, normalize, FeatureStats, NormScope, NormStats};
pub use resample::{resample_to_weekly, weekly_grid};
pub use sample::{build_sample, make_samples, WindowSample, WindowShape};
pub use split::{split_6_2_2, Split, SplitRanges};
