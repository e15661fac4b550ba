use std::ops::Range;

use chrono::{Duration, NaiveDate};

use crate::data::frame::WeeklyFrame;
use crate::error::{Error, Result};
use crate::model::{calendar_matrix, Task};
use crate::tensor::Tensor;

/// One supervised pair.
///
/// The decoder placeholder holds `label_len` observed rows (the tail of the
/// encoder block) followed by `horizon` rows whose response is zero; under
/// `Mm` those rows keep their true covariates, under `Ms` they are all zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub encoder_block: Tensor,
    pub encoder_calendar: Tensor,
    pub decoder_placeholder: Tensor,
    pub decoder_calendar: Tensor,
    /// `[horizon, 1]` response values, normalized units.
    pub target: Tensor,
    pub task: Task,
    /// Row of the first forecast week.
    pub origin_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowShape {
    pub seq_len: usize,
    pub horizon: usize,
    pub label_len: usize,
}

impl WindowShape {
    pub fn span(&self) -> usize {
        self.seq_len + self.horizon
    }
}

fn week_after(frame: &WeeklyFrame, row: usize) -> NaiveDate {
    let last = frame.weeks() - 1;
    if row <= last {
        frame.dates()[row]
    } else {
        frame.dates()[last] + Duration::days(7 * (row - last) as i64)
    }
}

/// Builds the sample whose encoder block starts at row `start`.
///
/// Horizon rows past the end of `frame` are allowed only for `Ms` and only
/// when `allow_future` is set (forecasting beyond the data); their target is
/// reported as zero.
pub fn build_sample(
    frame: &WeeklyFrame,
    start: usize,
    task: Task,
    shape: WindowShape,
    allow_future: bool,
) -> Result<WindowSample> {
    let WindowShape {
        seq_len: m,
        horizon: n,
        label_len,
    } = shape;
    if label_len > m || m == 0 || n == 0 {
        return Err(Error::Config(format!("invalid window shape {shape:?}")));
    }
    let f = frame.features();
    let resp = frame.response_index();
    let origin = start + m;
    if origin > frame.weeks() {
        return Err(Error::Data(format!(
            "encoder block {start}..{origin} exceeds {} weeks",
            frame.weeks()
        )));
    }
    let available = frame.weeks() - origin;
    if available < n && (task == Task::Mm || !allow_future) {
        return Err(Error::Data(format!(
            "horizon needs {n} weeks after row {origin}, only {available} available"
        )));
    }

    let encoder_block = frame.block(start, origin)?;
    let enc_dates: Vec<NaiveDate> = frame.dates()[start..origin].to_vec();

    let dec_start = origin - label_len;
    let mut placeholder = vec![0.0; (label_len + n) * f];
    for (r, t) in (dec_start..origin).enumerate() {
        placeholder[r * f..(r + 1) * f].copy_from_slice(frame.row(t));
    }
    let mut target = vec![0.0; n];
    for (h, slot) in target.iter_mut().enumerate() {
        let t = origin + h;
        if t >= frame.weeks() {
            continue;
        }
        *slot = frame.get(t, resp);
        if task == Task::Mm {
            let r = label_len + h;
            placeholder[r * f..(r + 1) * f].copy_from_slice(frame.row(t));
            placeholder[r * f + resp] = 0.0;
        }
    }
    let dec_dates: Vec<NaiveDate> = (dec_start..origin + n).map(|t| week_after(frame, t)).collect();

    Ok(WindowSample {
        encoder_block,
        encoder_calendar: calendar_matrix(&enc_dates),
        decoder_placeholder: Tensor::new(&[label_len + n, f], placeholder)?,
        decoder_calendar: calendar_matrix(&dec_dates),
        target: Tensor::new(&[n, 1], target)?,
        task,
        origin_index: origin,
    })
}

/// Every sample whose encoder block and horizon fall inside `rows`:
/// `rows.len() - (m + n) + 1` of them.
pub fn make_samples(frame: &WeeklyFrame, rows: Range<usize>, task: Task, shape: WindowShape) -> Result<Vec<WindowSample>> {
    if rows.end > frame.weeks() {
        return Err(Error::Data(format!("rows {rows:?} exceed {} weeks", frame.weeks())));
    }
    if rows.len() < shape.span() {
        return Err(Error::Data(format!(
            "split of {} weeks is shorter than seq_len + horizon = {}",
            rows.len(),
            shape.span()
        )));
    }
    let last = rows.end - shape.span();
    (rows.start..=last)
        .map(|s| build_sample(frame, s, task, shape, false))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> WeeklyFrame {
        // columns: cov, cases; row t = [10 + t, 100 + t]
        let d0 = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let dates = (0..5).map(|i| d0 + Duration::days(7 * i)).collect();
        let values = (0..5).flat_map(|t| [10.0 + t as f64, 100.0 + t as f64]).collect();
        WeeklyFrame::new(dates, vec!["cov".into(), "cases".into()], values, 1).unwrap()
    }

    const SHAPE: WindowShape = WindowShape {
        seq_len: 2,
        horizon: 1,
        label_len: 1,
    };

    #[test]
    fn ms_placeholder_horizon_is_zero() {
        let s = build_sample(&toy(), 0, Task::Ms, SHAPE, false).unwrap();
        assert_eq!(s.encoder_block.data(), &[10.0, 100.0, 11.0, 101.0]);
        assert_eq!(s.decoder_placeholder.data(), &[11.0, 101.0, 0.0, 0.0]);
        assert_eq!(s.target.data(), &[102.0]);
        assert_eq!(s.origin_index, 2);
    }

    #[test]
    fn mm_placeholder_keeps_covariates() {
        let s = build_sample(&toy(), 0, Task::Mm, SHAPE, false).unwrap();
        assert_eq!(s.decoder_placeholder.data(), &[11.0, 101.0, 12.0, 0.0]);
        assert_eq!(s.target.data(), &[102.0]);
    }

    #[test]
    fn sample_count_and_short_split() {
        let f = toy();
        assert_eq!(make_samples(&f, 0..5, Task::Ms, SHAPE).unwrap().len(), 3);
        assert_eq!(make_samples(&f, 1..4, Task::Mm, SHAPE).unwrap().len(), 1);
        assert!(make_samples(&f, 0..2, Task::Ms, SHAPE).is_err());
    }

    #[test]
    fn future_horizon_only_for_ms_forecasts() {
        let f = toy();
        let s = build_sample(&f, 3, Task::Ms, SHAPE, true).unwrap();
        assert_eq!(s.origin_index, 5);
        assert_eq!(s.decoder_calendar.rows(), 2);
        assert!(build_sample(&f, 3, Task::Ms, SHAPE, false).is_err());
        assert!(build_sample(&f, 3, Task::Mm, SHAPE, true).is_err());
    }
}
