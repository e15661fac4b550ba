//! Seeded synthetic datasets: a 13-feature climate/case frame with the same
//! layout as the weekly dengue data (also writable as raw mixed-resolution
//! files plus a manifest), and a small driver task whose response is a lagged
//! nonlinear function of two covariates.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::frame::WeeklyFrame;
use crate::data::manifest::{write_series, FeatureSpec, Manifest, MissingRule, Observation, Resolution, WeeklyRule};
use crate::error::Result;

pub const SD_FEATURES: [&str; 13] = [
    "avg_temperature",
    "precipitation",
    "soi",
    "oni_total",
    "oni_anomaly",
    "iod",
    "iod_east",
    "nino12",
    "nino3",
    "nino4",
    "nino34",
    "nino_anomaly",
    "cases",
];

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

fn weekly_dates(start: NaiveDate, weeks: usize) -> Vec<NaiveDate> {
    (0..weeks).map(|i| start + Duration::days(7 * i as i64)).collect()
}

/// AR(1) path with unit stationary variance.
fn ar1<R: Rng>(rng: &mut R, len: usize, phi: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, (1.0 - phi * phi).sqrt()).expect("valid sigma");
    let mut x = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    (0..len)
        .map(|_| {
            x = phi * x + noise.sample(rng);
            x
        })
        .collect()
}

fn month_key(d: NaiveDate) -> (i32, u32) {
    (d.year(), d.month())
}

struct Simulation {
    start: NaiveDate,
    days: usize,
    temperature: Vec<f64>,
    precipitation: Vec<Option<f64>>,
    months: Vec<NaiveDate>,
    monthly: [Vec<f64>; 3],
    weekly: Vec<[f64; 7]>,
    cases: Vec<f64>,
}

fn simulate(weeks: usize, seed: u64) -> Simulation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = default_start();
    let days = weeks * 7;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let temp_noise = ar1(&mut rng, days, 0.8);
    let temperature: Vec<f64> = (0..days)
        .map(|d| 27.5 + 1.2 * (2.0 * PI * d as f64 / 365.25).sin() + 0.8 * temp_noise[d])
        .collect();
    let precipitation: Vec<Option<f64>> = (0..days)
        .map(|d| {
            if rng.gen_bool(0.03) {
                return None;
            }
            let wet = 0.5 + 0.3 * (2.0 * PI * (d as f64 / 365.25 + 0.25)).sin();
            if rng.gen_bool(wet) {
                let z: f64 = unit.sample(&mut rng);
                Some((8.0 * z * z).min(120.0))
            } else {
                Some(0.0)
            }
        })
        .collect();

    let first = NaiveDate::from_ymd_opt(start.year(), start.month(), 1).expect("valid");
    let last_day = start + Duration::days(days as i64);
    let mut months = Vec::new();
    let mut m = first;
    while m <= last_day {
        months.push(m);
        m = if m.month() == 12 {
            NaiveDate::from_ymd_opt(m.year() + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(m.year(), m.month() + 1, 1)
        }
        .expect("valid month");
    }
    let enso = ar1(&mut rng, months.len(), 0.9);
    let soi_noise = ar1(&mut rng, months.len(), 0.5);
    let monthly = [
        enso.iter().zip(&soi_noise).map(|(e, n)| -8.0 * e + 4.0 * n).collect(),
        enso.iter().map(|e| 27.0 + 0.9 * e).collect(),
        enso.iter().map(|e| 0.9 * e).collect(),
    ];

    let iod = ar1(&mut rng, weeks, 0.85);
    let regional: Vec<Vec<f64>> = (0..5).map(|_| ar1(&mut rng, weeks, 0.7)).collect();
    let weekly: Vec<[f64; 7]> = (0..weeks)
        .map(|w| {
            let d = start + Duration::days(7 * w as i64);
            let e = enso[months.iter().position(|&m| month_key(m) == month_key(d)).expect("month covered")];
            let season = (2.0 * PI * w as f64 / 52.18).sin();
            [
                0.4 * iod[w],
                28.0 + 0.3 * iod[w] + 0.2 * season,
                23.0 + 2.0 * season + 0.8 * e + 0.3 * regional[0][w],
                25.5 + 0.8 * season + 0.9 * e + 0.3 * regional[1][w],
                28.5 + 0.3 * season + 0.6 * e + 0.3 * regional[2][w],
                27.0 + 0.6 * season + 0.8 * e + 0.3 * regional[3][w],
                0.8 * e + 0.3 * regional[4][w],
            ]
        })
        .collect();

    let mut cases = Vec::with_capacity(weeks);
    let noise = ar1(&mut rng, weeks, 0.6);
    for w in 0..weeks {
        let lagged = w.saturating_sub(8);
        let t = temperature[lagged * 7..lagged * 7 + 7].iter().sum::<f64>() / 7.0;
        let p: f64 = precipitation[lagged * 7..lagged * 7 + 7].iter().map(|v| v.unwrap_or(0.0)).sum();
        let n34 = weekly[w.saturating_sub(12)][5];
        let drive = 0.9 * (t - 27.5) + 0.01 * (p - 30.0) + 0.5 * (n34 - 27.0) + 0.3 * noise[w];
        cases.push((200.0 * (1.0 + drive.tanh()) + 20.0).round());
    }

    Simulation {
        start,
        days,
        temperature,
        precipitation,
        months,
        monthly,
        weekly,
        cases,
    }
}

/// A `weeks x 13` frame in the dengue layout, already weekly.
pub fn sd_like_frame(weeks: usize, seed: u64) -> Result<WeeklyFrame> {
    let sim = simulate(weeks, seed);
    let dates = weekly_dates(sim.start, weeks);
    let mut values = Vec::with_capacity(weeks * SD_FEATURES.len());
    for (w, date) in dates.iter().enumerate() {
        let t = sim.temperature[w * 7..w * 7 + 7].iter().sum::<f64>() / 7.0;
        let p: f64 = sim.precipitation[w * 7..w * 7 + 7].iter().map(|v| v.unwrap_or(0.0)).sum();
        let mi = sim
            .months
            .iter()
            .position(|&m| month_key(m) == month_key(*date))
            .expect("month covered");
        values.push(t);
        values.push(p);
        for series in &sim.monthly {
            values.push(series[mi]);
        }
        values.extend_from_slice(&sim.weekly[w]);
        values.push(sim.cases[w]);
    }
    let names = SD_FEATURES.iter().map(|s| s.to_string()).collect();
    Ok(WeeklyFrame::new(dates, names, values, SD_FEATURES.len() - 1)?.quantized())
}

/// Writes the raw series at their native resolutions (daily temperature and
/// precipitation, monthly SOI/ONI, weekly IOD/NINO and cases) plus
/// `manifest.json` into `dir`. Returns the manifest path.
pub fn write_sd_like_dataset(dir: &Path, weeks: usize, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let sim = simulate(weeks, seed);
    let day = |i: usize| sim.start + Duration::days(i as i64);

    let temperature: Vec<Observation> = (0..sim.days).map(|i| (day(i), Some(sim.temperature[i]))).collect();
    let precipitation: Vec<Observation> = (0..sim.days).map(|i| (day(i), sim.precipitation[i])).collect();
    write_series(&dir.join("avg_temperature.csv"), &temperature)?;
    write_series(&dir.join("precipitation.csv"), &precipitation)?;

    let mut specs = vec![
        FeatureSpec::new("avg_temperature", Resolution::Daily, WeeklyRule::Mean, MissingRule::Error)
            .with_file("avg_temperature.csv"),
        FeatureSpec::new("precipitation", Resolution::Daily, WeeklyRule::Sum, MissingRule::Zero)
            .with_file("precipitation.csv"),
    ];
    for (k, name) in ["soi", "oni_total", "oni_anomaly"].iter().enumerate() {
        let series: Vec<Observation> = sim
            .months
            .iter()
            .zip(&sim.monthly[k])
            .map(|(&m, &v)| (m, Some(v)))
            .collect();
        write_series(&dir.join(format!("{name}.csv")), &series)?;
        specs.push(
            FeatureSpec::new(name, Resolution::Monthly, WeeklyRule::MonthOfFirstDay, MissingRule::Error)
                .with_file(format!("{name}.csv")),
        );
    }
    let dates = weekly_dates(sim.start, weeks);
    for (k, name) in SD_FEATURES[5..12].iter().enumerate() {
        let series: Vec<Observation> = dates.iter().zip(&sim.weekly).map(|(&d, w)| (d, Some(w[k]))).collect();
        write_series(&dir.join(format!("{name}.csv")), &series)?;
        specs.push(
            FeatureSpec::new(name, Resolution::Weekly, WeeklyRule::Mean, MissingRule::Error)
                .with_file(format!("{name}.csv")),
        );
    }
    let cases: Vec<Observation> = dates.iter().zip(&sim.cases).map(|(&d, &c)| (d, Some(c))).collect();
    write_series(&dir.join("cases.csv"), &cases)?;
    specs.push(
        FeatureSpec::new("cases", Resolution::Weekly, WeeklyRule::Mean, MissingRule::Error)
            .with_file("cases.csv")
            .as_response(),
    );

    let manifest = Manifest::new(specs, dir)?;
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Parameters of the lagged-driver task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverTask {
    pub weeks: usize,
    pub lag: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DriverTask {
    fn default() -> Self {
        DriverTask {
            weeks: 1000,
            lag: 1,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

/// Columns `driver_a, driver_b, distractor, cases`, where
/// `cases[t] = tanh(1.5 a[t-lag]) + 0.5 b[t-lag]^2 + N(0, sigma^2)` and the
/// drivers are seasonal AR(1) processes.
pub fn lagged_driver_frame(task: DriverTask) -> Result<WeeklyFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let burn = task.lag;
    let len = task.weeks + burn;
    let a_noise = ar1(&mut rng, len, 0.9);
    let b_noise = ar1(&mut rng, len, 0.8);
    let distractor = ar1(&mut rng, len, 0.5);
    let a: Vec<f64> = (0..len)
        .map(|t| 0.7 * (2.0 * PI * t as f64 / 52.18).sin() + 0.8 * a_noise[t])
        .collect();
    let b: Vec<f64> = (0..len)
        .map(|t| 0.6 * (2.0 * PI * t as f64 / 26.09).cos() + 0.8 * b_noise[t])
        .collect();
    let noise = Normal::new(0.0, task.noise_sigma).map_err(|e| crate::Error::Config(e.to_string()))?;

    let mut values = Vec::with_capacity(task.weeks * 4);
    for t in burn..len {
        let src = t - task.lag;
        let cases = (1.5 * a[src]).tanh() + 0.5 * b[src] * b[src] + noise.sample(&mut rng);
        values.extend_from_slice(&[a[t], b[t], distractor[t], cases]);
    }
    let names = ["driver_a", "driver_b", "distractor", "cases"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(WeeklyFrame::new(weekly_dates(default_start(), task.weeks), names, values, 3)?.quantized())
}
