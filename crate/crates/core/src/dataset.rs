//! Frame-level datasets, seeded induction sampling and train/test splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::{stream, SeededRng, PRNG_ID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomalous),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.bit())
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Normal => Label::Anomalous,
            Label::Anomalous => Label::Normal,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRecord {
    pub frame_id: String,
    pub video_id: String,
    pub path: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("duplicate frame id {0:?}")]
    DuplicateFrameId(String),
    #[error("not enough {label} frames: have {have}, need {need}")]
    InsufficientFrames { label: Label, have: usize, need: usize },
    #[error("induction sample count must be positive")]
    ZeroSampleCount,
    #[error("excluded frame id {0:?} is not in the dataset")]
    UnknownExcludedId(String),
    #[error("split ratio {0} is not strictly between 0 and 1")]
    InvalidRatio(f64),
}

/// An ordered collection of frames with unique ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    frames: Vec<FrameRecord>,
    pub fps: Option<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, frames: Vec<FrameRecord>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for f in &frames {
            if !seen.insert(f.frame_id.as_str()) {
                return Err(DatasetError::DuplicateFrameId(f.frame_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            frames,
            fps: None,
        })
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.frames.iter().filter(|f| f.label == label).count()
    }

    pub fn get(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    /// Frames whose id is in `ids`, in dataset order.
    pub fn select(&self, ids: &BTreeSet<String>) -> Vec<FrameRecord> {
        self.frames
            .iter()
            .filter(|f| ids.contains(&f.frame_id))
            .cloned()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InductionSample {
    pub normal: Vec<FrameRecord>,
    pub anomalous: Vec<FrameRecord>,
}

impl InductionSample {
    pub fn frame_ids(&self) -> BTreeSet<String> {
        self.normal
            .iter()
            .chain(&self.anomalous)
            .map(|f| f.frame_id.clone())
            .collect()
    }
}

/// Draws `n` normal and `n` anomalous frames without replacement.
///
/// Each label's frames are taken in dataset order and partially shuffled; the
/// result keeps the draw order.
pub fn sample_induction_frames(dataset: &Dataset, n: usize, seed: u64) -> Result<InductionSample, DatasetError> {
    if n == 0 {
        return Err(DatasetError::ZeroSampleCount);
    }
    let mut rng = SeededRng::new(seed, stream::INDUCTION_SAMPLE);
    let mut draw = |label: Label| {
        let mut pool: Vec<&FrameRecord> = dataset.frames.iter().filter(|f| f.label == label).collect();
        if pool.len() < n {
            return Err(DatasetError::InsufficientFrames {
                label,
                have: pool.len(),
                need: n,
            });
        }
        // Partial Fisher-Yates from the front.
        for i in 0..n {
            let j = i + rng.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        Ok(pool[..n].iter().map(|f| (*f).clone()).collect::<Vec<_>>())
    };
    let normal = draw(Label::Normal)?;
    let anomalous = draw(Label::Anomalous)?;
    Ok(InductionSample { normal, anomalous })
}

/// Disjoint frame-id sets for induction, training and testing.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitAssignment {
    pub induction_normal: BTreeSet<String>,
    pub induction_anomalous: BTreeSet<String>,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub ratio: f64,
    pub seed: u64,
    pub prng: String,
}

/// Number of training frames out of `remaining` for a train `ratio`.
///
/// Floor of the product, with a tolerance of 1e-9 so products such as
/// `0.29 * 100 = 28.999999999999996` land on the intended integer.
pub fn train_count(remaining: usize, ratio: f64) -> usize {
    let exact = ratio * remaining as f64;
    let train = libm::floor(exact + 1e-9) as usize;
    train.min(remaining)
}

/// Shuffles every frame not in `excluded` and splits it by `ratio`.
///
/// Excluded frames are reported as the induction sets, partitioned by label.
pub fn make_splits(
    dataset: &Dataset,
    excluded: &BTreeSet<String>,
    ratio: f64,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let by_id: BTreeMap<&str, &FrameRecord> = dataset.frames.iter().map(|f| (f.frame_id.as_str(), f)).collect();
    let mut induction_normal = BTreeSet::new();
    let mut induction_anomalous = BTreeSet::new();
    for id in excluded {
        let frame = by_id
            .get(id.as_str())
            .ok_or_else(|| DatasetError::UnknownExcludedId(id.clone()))?;
        match frame.label {
            Label::Normal => induction_normal.insert(id.clone()),
            Label::Anomalous => induction_anomalous.insert(id.clone()),
        };
    }

    let mut remaining: Vec<&str> = dataset
        .frames
        .iter()
        .map(|f| f.frame_id.as_str())
        .filter(|id| !excluded.contains(*id))
        .collect();
    SeededRng::new(seed, stream::SPLIT).shuffle(&mut remaining);
    let cut = train_count(remaining.len(), ratio);
    let train = remaining[..cut].iter().map(|s| String::from(*s)).collect();
    let test = remaining[cut..].iter().map(|s| String::from(*s)).collect();

    Ok(SplitAssignment {
        induction_normal,
        induction_anomalous,
        train,
        test,
        ratio,
        seed,
        prng: String::from(PRNG_ID),
    })
}

/// Induction sampling followed by the train/test split of what is left.
pub fn plan_splits(
    dataset: &Dataset,
    induction_samples: usize,
    ratio: f64,
    seed: u64,
) -> Result<(InductionSample, SplitAssignment), DatasetError> {
    let sample = sample_induction_frames(dataset, induction_samples, seed)?;
    let split = make_splits(dataset, &sample.frame_ids(), ratio, seed)?;
    Ok((sample, split))
}
