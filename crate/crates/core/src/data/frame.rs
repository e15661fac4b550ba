use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};

use crate::data::manifest::{read_series, FeatureSpec, Manifest, MissingRule, Resolution, WeeklyRule};
use crate::data::resample::{resample_to_weekly, weekly_grid};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Formats with nine significant digits, plain decimal notation where it
/// stays short, trailing zeros trimmed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-5..15).contains(&exp) {
        let m = trim_fraction(mantissa);
        return format!("{sign}{m}e{exp}");
    }
    let body = if exp >= 0 {
        let int_len = exp as usize + 1;
        if digits.len() > int_len {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        } else {
            format!("{digits}{}", "0".repeat(int_len - digits.len()))
        }
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{}", trim_fraction(&body))
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value a nine-significant-digit CSV round trip produces.
pub fn quantize(x: f64) -> f64 {
    format_sig9(x).parse().expect("formatted number parses")
}

/// Weekly observations aligned on one grid: `T` week starts by `F` features,
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeeklyFrame {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    values: Vec<f64>,
    response: usize,
}

impl WeeklyFrame {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, values: Vec<f64>, response: usize) -> Result<Self> {
        if dates.is_empty() || names.is_empty() {
            return Err(Error::Data("frame needs at least one week and one feature".into()));
        }
        if values.len() != dates.len() * names.len() {
            return Err(Error::Data(format!(
                "{} values for {} weeks x {} features",
                values.len(),
                dates.len(),
                names.len()
            )));
        }
        if response >= names.len() {
            return Err(Error::Data(format!("response column {response} out of range")));
        }
        for w in dates.windows(2) {
            if w[1] - w[0] != Duration::days(7) {
                return Err(Error::Data(format!("weeks not contiguous at {}", w[1])));
            }
        }
        Ok(WeeklyFrame {
            dates,
            names,
            values,
            response,
        })
    }

    pub fn weeks(&self) -> usize {
        self.dates.len()
    }

    pub fn features(&self) -> usize {
        self.names.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn response_index(&self) -> usize {
        self.response
    }

    pub fn response_name(&self) -> &str {
        &self.names[self.response]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, week: usize, feature: usize) -> f64 {
        self.values[week * self.names.len() + feature]
    }

    pub fn row(&self, week: usize) -> &[f64] {
        let f = self.names.len();
        &self.values[week * f..(week + 1) * f]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.weeks()).map(|t| self.get(t, feature)).collect()
    }

    /// Rows `start..end` as a `[end - start, F]` tensor.
    pub fn block(&self, start: usize, end: usize) -> Result<Tensor> {
        let f = self.names.len();
        Tensor::new(&[end - start, f], self.values[start * f..end * f].to_vec())
    }

    pub fn week_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        WeeklyFrame {
            values,
            ..self.clone()
        }
    }

    pub fn quantized(&self) -> Self {
        self.with_values(self.values.iter().map(|&v| quantize(v)).collect())
    }

    /// Writes `week_start,<feature...>` with nine significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("week_start");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format("%Y-%m-%d").to_string());
            for v in self.row(t) {
                out.push(',');
                out.push_str(&format_sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Reads an aligned CSV; `response` names the response column.
    pub fn read_csv(path: &Path, response: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("week_start") {
            return Err(Error::Data(format!("{}: first column must be week_start", path.display())));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let response_idx = names
            .iter()
            .position(|n| n == response)
            .ok_or_else(|| Error::Data(format!("{}: no response column `{response}`", path.display())))?;
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let raw = rec.get(0).unwrap_or("");
            let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .map_err(|e| Error::Data(format!("row {}: bad date `{raw}`: {e}", line + 2)))?;
            dates.push(date);
            for field in rec.iter().skip(1) {
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("row {}: bad value `{field}`: {e}", line + 2)))?,
                );
            }
        }
        WeeklyFrame::new(dates, names, values, response_idx)
    }
}

/// Per-feature summary of an ingestion run.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub feature: String,
    pub observations: usize,
    pub rule: String,
}

fn describe_rule(spec: &FeatureSpec) -> String {
    let how = match (spec.native_resolution, spec.weekly_rule) {
        (Resolution::Weekly, _) => "weekly passthrough",
        (Resolution::Daily, WeeklyRule::Sum) => "daily sum over the week",
        (Resolution::Daily, _) => "daily mean over the week",
        (Resolution::Monthly, _) => "monthly value of the week's first day",
    };
    let missing = match spec.missing_rule {
        MissingRule::Zero => "missing as zero",
        MissingRule::Error => "missing is an error",
    };
    format!("{how}, {missing}")
}

/// Loads every series named in `manifest`, aligns them on the response
/// series' weekly grid and quantizes to the CSV precision.
pub fn ingest(manifest: &Manifest) -> Result<(WeeklyFrame, Vec<IngestReport>)> {
    let response_spec = manifest.response();
    let response_series = read_series(&manifest.file_for(response_spec)?, &response_spec.name)?;
    let grid = weekly_grid(&response_series, &response_spec.name)?;

    let mut columns = Vec::with_capacity(manifest.features.len());
    let mut reports = Vec::with_capacity(manifest.features.len());
    for spec in &manifest.features {
        let series = if spec.response {
            response_series.clone()
        } else {
            read_series(&manifest.file_for(spec)?, &spec.name)?
        };
        columns.push(resample_to_weekly(&series, spec, &grid)?);
        reports.push(IngestReport {
            feature: spec.name.clone(),
            observations: series.len(),
            rule: describe_rule(spec),
        });
    }
    let f = columns.len();
    let mut values = vec![0.0; grid.len() * f];
    for (j, col) in columns.iter().enumerate() {
        for (t, v) in col.iter().enumerate() {
            values[t * f + j] = *v;
        }
    }
    let names = manifest.features.iter().map(|s| s.name.clone()).collect();
    let response = manifest.features.iter().position(|s| s.response).expect("validated");
    let frame = WeeklyFrame::new(grid, names, values, response)?.quantized();
    Ok((frame, reports))
}
