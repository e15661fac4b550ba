use crate::data::frame::WeeklyFrame;
use crate::data::normalize::{normalize, NormScope, NormStats};
use crate::data::sample::{make_samples, WindowSample, WindowShape};
use crate::data::split::{split_6_2_2, Split, SplitRanges};
use crate::error::Result;
use crate::model::Task;

/// Samples for the three chronological splits.
#[derive(Clone, Debug, Default)]
pub struct SplitSamples {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl SplitSamples {
    pub fn get(&self, split: Split) -> &[WindowSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// A normalized frame with its statistics, split and windowed samples.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub frame: WeeklyFrame,
    pub stats: NormStats,
    pub splits: SplitRanges,
    pub samples: SplitSamples,
}

/// Normalizes `raw`, splits it 6/2/2 and windows each split independently.
pub fn prepare(raw: &WeeklyFrame, scope: NormScope, task: Task, shape: WindowShape) -> Result<Prepared> {
    let (frame, stats) = normalize(raw, scope)?;
    let splits = split_6_2_2(frame.weeks())?;
    let samples = SplitSamples {
        train: make_samples(&frame, splits.train.clone(), task, shape)?,
        val: make_samples(&frame, splits.val.clone(), task, shape)?,
        test: make_samples(&frame, splits.test.clone(), task, shape)?,
    };
    Ok(Prepared {
        frame,
        stats,
        splits,
        samples,
    })
}
