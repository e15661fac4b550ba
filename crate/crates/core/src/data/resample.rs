use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};

use crate::data::manifest::{FeatureSpec, MissingRule, Observation, Resolution, WeeklyRule};
use crate::error::{Error, Result};

fn missing(spec: &FeatureSpec, week: NaiveDate, what: String) -> Result<f64> {
    match spec.missing_rule {
        MissingRule::Zero => Ok(0.0),
        MissingRule::Error => Err(Error::Ingestion {
            feature: spec.name.clone(),
            week: Some(week.to_string()),
            msg: what,
        }),
    }
}

/// Aligns one series onto the weekly `grid` of week-start dates.
///
/// Daily data is averaged or summed over the seven days starting at each
/// week start, monthly data takes the value of the month containing the
/// week's first day, and weekly data passes through. Missing observations
/// follow the feature's missing rule.
pub fn resample_to_weekly(series: &[Observation], spec: &FeatureSpec, grid: &[NaiveDate]) -> Result<Vec<f64>> {
    match spec.native_resolution {
        Resolution::Weekly => {
            let by_date: BTreeMap<NaiveDate, Option<f64>> = series.iter().copied().collect();
            grid.iter()
                .map(|&w| match by_date.get(&w) {
                    Some(Some(v)) => Ok(*v),
                    _ => missing(spec, w, "no weekly value".into()),
                })
                .collect()
        }
        Resolution::Daily => {
            let by_date: BTreeMap<NaiveDate, Option<f64>> = series.iter().copied().collect();
            grid.iter()
                .map(|&w| {
                    let mut total = 0.0;
                    for k in 0..7 {
                        let day = w + Duration::days(k);
                        total += match by_date.get(&day) {
                            Some(Some(v)) => *v,
                            _ => missing(spec, w, format!("no daily value for {day}"))?,
                        };
                    }
                    Ok(match spec.weekly_rule {
                        WeeklyRule::Sum => total,
                        _ => total / 7.0,
                    })
                })
                .collect()
        }
        Resolution::Monthly => {
            let by_month: BTreeMap<(i32, u32), Option<f64>> =
                series.iter().map(|(d, v)| ((d.year(), d.month()), *v)).collect();
            grid.iter()
                .map(|&w| match by_month.get(&(w.year(), w.month())) {
                    Some(Some(v)) => Ok(*v),
                    _ => missing(spec, w, format!("no monthly value for {}-{:02}", w.year(), w.month())),
                })
                .collect()
        }
    }
}

/// Week starts of the response series; they must be strictly increasing in
/// steps of exactly seven days.
pub fn weekly_grid(response: &[Observation], feature: &str) -> Result<Vec<NaiveDate>> {
    let mut dates: Vec<NaiveDate> = response.iter().map(|(d, _)| *d).collect();
    dates.sort_unstable();
    if dates.is_empty() {
        return Err(Error::Ingestion {
            feature: feature.to_string(),
            week: None,
            msg: "response series is empty".into(),
        });
    }
    for w in dates.windows(2) {
        if w[1] - w[0] != Duration::days(7) {
            return Err(Error::Ingestion {
                feature: feature.to_string(),
                week: Some(w[1].to_string()),
                msg: format!("weekly grid broken: {} follows {}", w[1], w[0]),
            });
        }
    }
    Ok(dates)
}
