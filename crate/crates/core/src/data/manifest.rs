use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Daily,
    Weekly,
    Monthly,
}

/// How a finer or coarser series becomes one value per week.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeeklyRule {
    /// Average of the seven daily values.
    Mean,
    /// Total of the seven daily values.
    Sum,
    /// Value of the month containing the week's first day.
    MonthOfFirstDay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingRule {
    /// A missing observation counts as 0.
    Zero,
    /// A missing observation aborts ingestion.
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    /// Two-column `date,value` CSV, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub native_resolution: Resolution,
    pub weekly_rule: WeeklyRule,
    pub missing_rule: MissingRule,
    #[serde(default)]
    pub response: bool,
}

impl FeatureSpec {
    pub fn new(name: &str, native_resolution: Resolution, weekly_rule: WeeklyRule, missing_rule: MissingRule) -> Self {
        FeatureSpec {
            name: name.to_string(),
            file: None,
            native_resolution,
            weekly_rule,
            missing_rule,
            response: false,
        }
    }

    pub fn with_file(mut self, file: impl Into<PathBuf>) -> Self {
        self.file = Some(file.into());
        self
    }

    pub fn as_response(mut self) -> Self {
        self.response = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Ingestion {
            feature: self.name.clone(),
            week: None,
            msg,
        };
        match (self.native_resolution, self.weekly_rule) {
            (Resolution::Daily, WeeklyRule::Mean | WeeklyRule::Sum) => {}
            (Resolution::Monthly, WeeklyRule::MonthOfFirstDay) => {}
            (Resolution::Weekly, _) => {}
            (res, rule) => return Err(bad(format!("rule {rule:?} does not apply to {res:?} data"))),
        }
        if self.response && self.native_resolution != Resolution::Weekly {
            return Err(bad("the response series must be weekly".into()));
        }
        Ok(())
    }
}

/// Ordered feature list with exactly one response.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub features: Vec<FeatureSpec>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(features: Vec<FeatureSpec>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Manifest {
            features,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
            feature: "<manifest>".into(),
            week: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        let features: Vec<FeatureSpec> = serde_json::from_str(&text).map_err(|e| Error::Ingestion {
            feature: "<manifest>".into(),
            week: None,
            msg: format!("invalid manifest JSON: {e}"),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::new(features, base)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.features)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let responses = self.features.iter().filter(|f| f.response).count();
        if responses != 1 {
            return Err(Error::Ingestion {
                feature: "<manifest>".into(),
                week: None,
                msg: format!("expected exactly one response feature, found {responses}"),
            });
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Ingestion {
                feature: "<manifest>".into(),
                week: None,
                msg: "duplicate feature names".into(),
            });
        }
        self.features.iter().try_for_each(FeatureSpec::validate)
    }

    pub fn response(&self) -> &FeatureSpec {
        self.features.iter().find(|f| f.response).expect("validated")
    }

    pub fn file_for(&self, spec: &FeatureSpec) -> Result<PathBuf> {
        let file = spec.file.as_ref().ok_or_else(|| Error::Ingestion {
            feature: spec.name.clone(),
            week: None,
            msg: "manifest entry has no `file`".into(),
        })?;
        Ok(self.base_dir.join(file))
    }
}

/// One dated observation; `None` marks an empty (missing) value.
pub type Observation = (NaiveDate, Option<f64>);

/// Reads a two-column `date,value` CSV with a header row.
pub fn read_series(path: &Path, feature: &str) -> Result<Vec<Observation>> {
    let err = |msg: String| Error::Ingestion {
        feature: feature.to_string(),
        week: None,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(format!("{}: {e}", path.display())))?;
        let date = rec.get(0).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| err(format!("{} row {}: bad date `{date}`: {e}", path.display(), line + 2)))?;
        let raw = rec.get(1).unwrap_or("").trim();
        let value = if raw.is_empty() {
            None
        } else {
            Some(
                raw.parse::<f64>()
                    .map_err(|e| err(format!("{} row {}: bad value `{raw}`: {e}", path.display(), line + 2)))?,
            )
        };
        out.push((date, value));
    }
    Ok(out)
}

pub fn write_series(path: &Path, series: &[Observation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    w.write_record(["date", "value"])?;
    for (d, v) in series {
        let v = v.map(super::frame::format_sig9).unwrap_or_default();
        w.write_record([d.format("%Y-%m-%d").to_string(), v])?;
    }
    w.flush()?;
    Ok(())
}
