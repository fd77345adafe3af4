//! Frame-level evaluation: AUROC (micro and per-video macro) and confusion
//! counts at a threshold.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::Label;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("AUROC needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClassError { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("no video contains both normal and anomalous frames")]
    NoEligibleVideos,
}

fn check(scores: &[f64], labels: &[Label]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(*s));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Computed from mid-ranks in O(n log n). Rank sums are kept doubled in
/// integers, so the result is exact up to the final division.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Result<f64, MetricsError> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|l| **l == Label::Anomalous).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClassError { positives, negatives });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of 2 * rank (1-based mid-ranks).
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        // -0.0 and 0.0 are the same score.
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_mid_rank = (i + 1 + j) as u128;
        let tied_positives = order[i..j].iter().filter(|&&k| labels[k] == Label::Anomalous).count() as u128;
        doubled_rank_sum += doubled_mid_rank * tied_positives;
        i = j;
    }
    let p = positives as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * positives * negatives) as f64)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MacroAuroc {
    pub mean: f64,
    pub per_video: BTreeMap<String, f64>,
    /// Videos without both classes.
    pub skipped: Vec<String>,
}

/// Unweighted mean of per-video AUROC over videos that contain both classes.
pub fn auroc_macro(per_video: &BTreeMap<String, (Vec<f64>, Vec<Label>)>) -> Result<MacroAuroc, MetricsError> {
    let mut scores_by_video = BTreeMap::new();
    let mut skipped = Vec::new();
    for (video, (scores, labels)) in per_video {
        match auroc(scores, labels) {
            Ok(a) => {
                scores_by_video.insert(video.clone(), a);
            }
            Err(MetricsError::SingleClassError { .. }) => skipped.push(video.clone()),
            Err(e) => return Err(e),
        }
    }
    if scores_by_video.is_empty() {
        return Err(MetricsError::NoEligibleVideos);
    }
    let mean = scores_by_video.values().sum::<f64>() / scores_by_video.len() as f64;
    Ok(MacroAuroc {
        mean,
        per_video: scores_by_video,
        skipped,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts when a frame is flagged iff `score > threshold`.
pub fn confusion_at(scores: &[f64], labels: &[Label], threshold: f64) -> Result<Confusion, MetricsError> {
    check(scores, labels)?;
    let mut c = Confusion::default();
    for (s, l) in scores.iter().zip(labels) {
        match (*s > threshold, l) {
            (true, Label::Anomalous) => c.tp += 1,
            (true, Label::Normal) => c.fp += 1,
            (false, Label::Normal) => c.tn += 1,
            (false, Label::Anomalous) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredFrame {
    pub frame_id: String,
    pub video_id: String,
    pub label: Label,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub auroc_micro: f64,
    pub auroc_macro: Option<f64>,
    pub per_video_auroc: BTreeMap<String, f64>,
    pub skipped_videos: Vec<String>,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub n_frames: usize,
}

impl EvalReport {
    /// Micro AUROC over all frames, macro AUROC when at least one video has
    /// both classes, and confusion counts at `threshold`.
    pub fn from_frames(frames: &[ScoredFrame], threshold: f64) -> Result<Self, MetricsError> {
        let scores: Vec<f64> = frames.iter().map(|f| f.score).collect();
        let labels: Vec<Label> = frames.iter().map(|f| f.label).collect();
        let auroc_micro = auroc(&scores, &labels)?;

        let mut per_video: BTreeMap<String, (Vec<f64>, Vec<Label>)> = BTreeMap::new();
        for f in frames {
            let entry = per_video.entry(f.video_id.clone()).or_default();
            entry.0.push(f.score);
            entry.1.push(f.label);
        }
        let (auroc_macro, per_video_auroc, skipped_videos) = match auroc_macro(&per_video) {
            Ok(m) => (Some(m.mean), m.per_video, m.skipped),
            Err(MetricsError::NoEligibleVideos) => (None, BTreeMap::new(), per_video.into_keys().collect()),
            Err(e) => return Err(e),
        };
        let c = confusion_at(&scores, &labels, threshold)?;
        Ok(Self {
            auroc_micro,
            auroc_macro,
            per_video_auroc,
            skipped_videos,
            threshold,
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
            n_frames: frames.len(),
        })
    }
}
