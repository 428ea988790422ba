//! One-to-one assignment of predictions to ground-truth objects.
//!
//! Matching is greedy in confidence order (Pascal VOC style) and
//! class-agnostic: which Table-style cell a pair lands in is decided later by
//! the confidence bucket, not by the predicted class.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iop, iou, BoundingBox};

/// A detector output: box plus per-class confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub image_id: String,
    pub bbox: BoundingBox,
    scores: Vec<f64>,
    confidence: f64,
}

impl Prediction {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::input("prediction has no class scores"));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::input(format!("class score {bad} outside [0, 1]")));
        }
        let confidence = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            scores,
            confidence,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// `max_i scores_i`, the value the threshold classifier sees.
    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    /// Index of the highest score; ties resolve to the lowest index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.scores.iter().enumerate() {
            if *s > self.scores[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Foreground(usize),
    Ood,
}

impl ObjectKind {
    pub fn is_ood(&self) -> bool {
        matches!(self, ObjectKind::Ood)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub kind: ObjectKind,
}

impl GroundTruthObject {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, kind: ObjectKind) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub overlap_threshold: f64,
    /// Use intersection-over-prediction instead of IoU against OOD objects.
    pub iop_for_ood: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.5,
            iop_for_ood: false,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::input(format!(
                "overlap threshold {} outside (0, 1]",
                self.overlap_threshold
            )));
        }
        Ok(())
    }

    /// Overlap between a prediction box and a ground-truth object under this config.
    pub fn overlap(&self, pred: &BoundingBox, gt: &GroundTruthObject) -> f64 {
        if self.iop_for_ood && gt.kind.is_ood() {
            iop(pred, &gt.bbox)
        } else {
            iou(pred, &gt.bbox)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub overlap: f64,
}

/// Indices refer to the slices handed to [`match_image`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truth: Vec<usize>,
}

/// Prediction indices sorted by confidence descending, ties by original index.
pub(crate) fn confidence_order(preds: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence()
            .partial_cmp(&preds[a].confidence())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching for the records of a single image.
///
/// Every prediction takes part, including those that will later be bucketed
/// as background; the taxonomy decides what a low-confidence match means.
pub fn match_image(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    let image = preds
        .first()
        .map(|p| p.image_id.as_str())
        .or_else(|| gts.first().map(|g| g.image_id.as_str()));
    if let Some(image) = image {
        let mixed =
            preds.iter().any(|p| p.image_id != image) || gts.iter().any(|g| g.image_id != image);
        if mixed {
            return Err(Error::input(
                "match_image called with records from several images",
            ));
        }
    }

    let mut gt_taken = vec![false; gts.len()];
    let mut pred_taken = vec![false; preds.len()];
    let mut pairs = Vec::new();

    for pi in confidence_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] {
                continue;
            }
            let ov = cfg.overlap(&preds[pi].bbox, gt);
            if ov < cfg.overlap_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| ov > b) {
                best = Some((gi, ov));
            }
        }
        if let Some((gi, overlap)) = best {
            gt_taken[gi] = true;
            pred_taken[pi] = true;
            pairs.push(MatchedPair {
                prediction: pi,
                ground_truth: gi,
                overlap,
            });
        }
    }

    Ok(MatchResult {
        pairs,
        unmatched_predictions: (0..preds.len()).filter(|&i| !pred_taken[i]).collect(),
        unmatched_ground_truth: (0..gts.len()).filter(|&i| !gt_taken[i]).collect(),
    })
}

/// Records of one image, borrowed from a larger dataset.
#[derive(Debug, Clone, Default)]
pub struct ImageRecords {
    pub image_id: String,
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<GroundTruthObject>,
}

/// Split flat record lists into per-image groups, ordered by image id.
/// Within an image the input order is kept.
pub fn group_by_image(preds: &[Prediction], gts: &[GroundTruthObject]) -> Vec<ImageRecords> {
    let mut map: BTreeMap<&str, ImageRecords> = BTreeMap::new();
    for p in preds {
        map.entry(p.image_id.as_str())
            .or_insert_with(|| ImageRecords {
                image_id: p.image_id.clone(),
                ..Default::default()
            })
            .predictions
            .push(p.clone());
    }
    for g in gts {
        map.entry(g.image_id.as_str())
            .or_insert_with(|| ImageRecords {
                image_id: g.image_id.clone(),
                ..Default::default()
            })
            .ground_truth
            .push(g.clone());
    }
    map.into_values().collect()
}
