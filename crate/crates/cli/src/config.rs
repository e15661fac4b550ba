use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fwin_core::data::NormScope;
use fwin_core::model::FWinConfig;
use fwin_core::training::TrainPlan;
use serde::{Deserialize, Serialize};

use crate::args::Overrides;

/// Everything one invocation needs, serialized as a single flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: FWinConfig,
    #[serde(flatten)]
    pub plan: TrainPlan,
    /// Aligned weekly CSV.
    pub data: Option<PathBuf>,
    pub response: String,
    pub norm_scope: NormScope,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: FWinConfig::default(),
            plan: TrainPlan::default(),
            data: None,
            response: "cases".into(),
            norm_scope: NormScope::Full,
            out: PathBuf::from("fwin-out"),
        }
    }
}

fn known_keys() -> BTreeSet<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

impl RunConfig {
    /// Defaults, then the JSON file (if any), then command-line flags.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match file {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                let Some(map) = value.as_object() else {
                    bail!("config {} must be a JSON object", path.display());
                };
                let known = known_keys();
                let unknown: Vec<&String> = map.keys().filter(|k| !known.contains(*k)).collect();
                if !unknown.is_empty() {
                    bail!("config {}: unknown keys {unknown:?}", path.display());
                }
                serde_json::from_value(value).with_context(|| format!("config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        overrides.apply(&mut config);
        Ok(config)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .context("no data file given (use --data or the `data` config key)")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes the resolved configuration to `<out>/config.json`.
    pub fn echo(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        fs::write(self.out.join("config.json"), self.to_json()?)?;
        Ok(())
    }
}
