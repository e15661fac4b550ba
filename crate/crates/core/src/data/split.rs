use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Contiguous chronological row ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }

    pub fn label(&self, row: usize) -> Split {
        if self.train.contains(&row) {
            Split::Train
        } else if self.val.contains(&row) {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// First `floor(0.6 T)` rows train, next `floor(0.2 T)` validation, the
/// remainder test.
pub fn split_6_2_2(total: usize) -> Result<SplitRanges> {
    if total < 10 {
        return Err(Error::Data(format!("need at least 10 weeks to split, got {total}")));
    }
    let train = total * 6 / 10;
    let val = total * 2 / 10;
    Ok(SplitRanges {
        train: 0..train,
        val: train..train + val,
        test: train + val..total,
    })
}
