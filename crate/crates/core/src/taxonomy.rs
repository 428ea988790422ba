//! Confidence-threshold classification and the OOD-extended confusion matrix.
//!
//! Rows of the matrix are the predicted category (BG / OOD / FG), columns
//! the actual one. The true-negative cell (predicted BG, actual BG) is not
//! tracked: at the anchor level it is dominated by the number of proposals
//! and says nothing about OOD behaviour.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{GroundTruthObject, MatchResult, ObjectKind, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub t_id_bg: f64,
    pub t_id_fg: f64,
}

impl ThresholdConfig {
    pub fn new(t_id_bg: f64, t_id_fg: f64) -> Result<Self> {
        if !(0.0 <= t_id_bg && t_id_bg <= t_id_fg && t_id_fg <= 1.0) {
            return Err(Error::input(format!(
                "thresholds must satisfy 0 <= t_bg <= t_fg <= 1, got ({t_id_bg}, {t_id_fg})"
            )));
        }
        Ok(Self { t_id_bg, t_id_fg })
    }
}

/// Predicted category, ordered BG < OOD < FG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredictedCategory {
    IdBackground,
    Ood,
    IdForeground,
}

impl fmt::Display for PredictedCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictedCategory::IdBackground => "ID_BG",
            PredictedCategory::Ood => "OOD",
            PredictedCategory::IdForeground => "ID_FG",
        })
    }
}

/// Bucket a confidence with left-closed intervals:
/// `[0, t_bg)` background, `[t_bg, t_fg)` OOD, `[t_fg, 1]` foreground.
pub fn classify(confidence: f64, cfg: &ThresholdConfig) -> Result<PredictedCategory> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::input(format!(
            "confidence {confidence} outside [0, 1]"
        )));
    }
    Ok(bucket(confidence, cfg))
}

#[inline]
pub(crate) fn bucket(confidence: f64, cfg: &ThresholdConfig) -> PredictedCategory {
    if confidence < cfg.t_id_bg {
        PredictedCategory::IdBackground
    } else if confidence < cfg.t_id_fg {
        PredictedCategory::Ood
    } else {
        PredictedCategory::IdForeground
    }
}

/// The eight tracked cells of the extended confusion matrix.
///
/// | predicted \ actual | BG   | OOD  | FG   |
/// |--------------------|------|------|------|
/// | BG                 | (TN) | FN_O | FN   |
/// | OOD                | FO_N | TO   | FO_P |
/// | FG                 | FP   | FP_O | TP   |
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtendedConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub to: u64,
    pub fn_o: u64,
    pub fo_n: u64,
    pub fo_p: u64,
    pub fp_o: u64,
}

impl ExtendedConfusionMatrix {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Count one matched (or unmatched, with `predicted = IdBackground`) ground-truth object.
    pub fn record_object(&mut self, actual: ObjectKind, predicted: PredictedCategory) {
        use PredictedCategory::*;
        match (actual, predicted) {
            (ObjectKind::Foreground(_), IdForeground) => self.tp += 1,
            (ObjectKind::Foreground(_), Ood) => self.fo_p += 1,
            (ObjectKind::Foreground(_), IdBackground) => self.fn_ += 1,
            (ObjectKind::Ood, Ood) => self.to += 1,
            (ObjectKind::Ood, IdForeground) => self.fp_o += 1,
            (ObjectKind::Ood, IdBackground) => self.fn_o += 1,
        }
    }

    /// Count a prediction that matched nothing (actual background).
    pub fn record_spurious(&mut self, predicted: PredictedCategory) {
        match predicted {
            PredictedCategory::IdForeground => self.fp += 1,
            PredictedCategory::Ood => self.fo_n += 1,
            PredictedCategory::IdBackground => {}
        }
    }

    /// Ground-truth objects of each kind implied by the cells: `(fg, ood)`.
    pub fn object_totals(&self) -> (u64, u64) {
        (
            self.tp + self.fn_ + self.fo_p,
            self.to + self.fn_o + self.fp_o,
        )
    }

    pub fn merge(&self, other: &Self) -> Self {
        *self + *other
    }
}

impl Add for ExtendedConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            fp: self.fp + o.fp,
            to: self.to + o.to,
            fn_o: self.fn_o + o.fn_o,
            fo_n: self.fo_n + o.fo_n,
            fo_p: self.fo_p + o.fo_p,
            fp_o: self.fp_o + o.fp_o,
        }
    }
}

impl AddAssign for ExtendedConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ExtendedConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), Add::add)
    }
}

/// Cell-wise sum.
pub fn merge(a: &ExtendedConfusionMatrix, b: &ExtendedConfusionMatrix) -> ExtendedConfusionMatrix {
    a.merge(b)
}

/// Populate the matrix for one matched image.
///
/// A ground-truth object whose only match falls below `t_id_bg` counts as
/// undetected; unmatched background-bucket predictions are true negatives
/// and are dropped.
pub fn accumulate(
    matches: &MatchResult,
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    cfg: &ThresholdConfig,
) -> Result<ExtendedConfusionMatrix> {
    let in_range = matches
        .pairs
        .iter()
        .all(|p| p.prediction < preds.len() && p.ground_truth < gts.len())
        && matches
            .unmatched_predictions
            .iter()
            .all(|&i| i < preds.len())
        && matches
            .unmatched_ground_truth
            .iter()
            .all(|&i| i < gts.len());
    if !in_range {
        return Err(Error::input(
            "match result does not belong to these records",
        ));
    }

    let mut m = ExtendedConfusionMatrix::zero();
    for pair in &matches.pairs {
        let cat = classify(preds[pair.prediction].confidence(), cfg)?;
        m.record_object(gts[pair.ground_truth].kind, cat);
    }
    for &gi in &matches.unmatched_ground_truth {
        m.record_object(gts[gi].kind, PredictedCategory::IdBackground);
    }
    for &pi in &matches.unmatched_predictions {
        m.record_spurious(classify(preds[pi].confidence(), cfg)?);
    }
    Ok(m)
}
