//! Separability (OBS / OFS / S), AP, AUROC, FPR at a target TPR and
//! confidence histograms.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::matching::{
    confidence_order, GroundTruthObject, ImageRecords, MatchResult, ObjectKind, Prediction,
};
use crate::taxonomy::ExtendedConfusionMatrix;

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// OOD-background separability: `TO / (TO + FN_O + FO_N)`, 0 on an empty denominator.
pub fn obs(m: &ExtendedConfusionMatrix) -> f64 {
    ratio(m.to, m.to + m.fn_o + m.fo_n)
}

/// OOD-foreground separability: `TO / (TO + FP_O + FO_P)`, 0 on an empty denominator.
pub fn ofs(m: &ExtendedConfusionMatrix) -> f64 {
    ratio(m.to, m.to + m.fp_o + m.fo_p)
}

/// Weighted harmonic mean of OBS and OFS:
/// `(1 + β²) · OBS · OFS / (β² · OBS + OFS)`.
pub fn separability(obs: f64, ofs: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::input(format!("beta must be positive, got {beta}")));
    }
    let b2 = beta * beta;
    let den = b2 * obs + ofs;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * obs * ofs / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityScores {
    pub obs: f64,
    pub ofs: f64,
    pub s: f64,
    pub beta: f64,
}

impl SeparabilityScores {
    pub fn from_matrix(m: &ExtendedConfusionMatrix, beta: f64) -> Result<Self> {
        let (o, f) = (obs(m), ofs(m));
        Ok(Self {
            obs: o,
            ofs: f,
            s: separability(o, f, beta)?,
            beta,
        })
    }
}

/// All-points AP from detections already ranked by confidence (best first).
///
/// `hits[i]` says whether the i-th ranked detection is a true positive;
/// `n_gt` is the number of ground-truth objects. Precision is made
/// monotone from the right before integrating over recall.
pub fn ap_from_ranked(hits: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// Single-class AP over a whole dataset at the given IoU threshold.
///
/// A prediction competes for class `k` when its highest score is `k`.
/// Matching here is class-aware greedy matching against foreground objects
/// of class `k`; anything else it hits (OOD objects included) is a false
/// positive. Returns `None` when the dataset has no object of class `k`.
pub fn average_precision(images: &[ImageRecords], class_id: usize, iou_thr: f64) -> Option<f64> {
    // (confidence, image rank, index within image, hit)
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0usize;

    for (img_rank, img) in images.iter().enumerate() {
        let gts: Vec<&GroundTruthObject> = img
            .ground_truth
            .iter()
            .filter(|g| g.kind == ObjectKind::Foreground(class_id))
            .collect();
        n_gt += gts.len();
        let mut taken = vec![false; gts.len()];
        for pi in confidence_order(&img.predictions) {
            let p = &img.predictions[pi];
            if p.predicted_class() != class_id {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let ov = iou(&p.bbox, &g.bbox);
                if ov >= iou_thr && best.is_none_or(|(_, b)| ov > b) {
                    best = Some((gi, ov));
                }
            }
            if let Some((gi, _)) = best {
                taken[gi] = true;
            }
            ranked.push((p.confidence(), img_rank, pi, best.is_some()));
        }
    }
    if n_gt == 0 {
        return None;
    }
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let hits: Vec<bool> = ranked.iter().map(|r| r.3).collect();
    Some(ap_from_ranked(&hits, n_gt))
}

/// Per-class AP for classes `0..n_classes` and their mean over the classes
/// that have ground truth.
pub fn mean_average_precision(
    images: &[ImageRecords],
    n_classes: usize,
    iou_thr: f64,
) -> (Vec<Option<f64>>, Option<f64>) {
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|k| average_precision(images, k, iou_thr))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    (per_class, map)
}

fn check_scores(id_scores: &[f64], ood_scores: &[f64]) -> Result<()> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::input("score populations must be non-empty"));
    }
    if id_scores
        .iter()
        .chain(ood_scores)
        .any(|s| !(0.0..=1.0).contains(s))
    {
        return Err(Error::input("scores must lie in [0, 1]"));
    }
    Ok(())
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    s
}

/// Probability that an ID score beats an OOD score, ties counted half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let ood = sorted(ood_scores);
    // twice the Mann-Whitney U, to keep ties integral
    let mut u2: u64 = 0;
    for &s in id_scores {
        let below = ood.partition_point(|&o| o < s);
        let not_above = ood.partition_point(|&o| o <= s);
        u2 += 2 * below as u64 + (not_above - below) as u64;
    }
    Ok(u2 as f64 / (2 * id_scores.len() as u64 * ood_scores.len() as u64) as f64)
}

/// FPR at the highest threshold `t` whose TPR reaches `tpr_target`.
///
/// A score counts as positive when it is `>= t`; candidate thresholds are
/// the distinct ID scores. ID is the positive class.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::input(format!(
            "TPR target {tpr_target} outside (0, 1]"
        )));
    }
    let id = sorted(id_scores);
    let ood = sorted(ood_scores);
    let n_id = id.len() as f64;
    let mut t_idx = id.len();
    // walk distinct ID scores from the top
    while t_idx > 0 {
        let t = id[t_idx - 1];
        let first = id.partition_point(|&s| s < t);
        let tpr = (id.len() - first) as f64 / n_id;
        if tpr >= tpr_target {
            let above = ood.len() - ood.partition_point(|&s| s < t);
            return Ok(above as f64 / ood.len() as f64);
        }
        t_idx = first;
    }
    Ok(1.0)
}

pub const HISTOGRAM_BINS: usize = 40;

/// Lower edge of bin `k` (`k / 40`, i.e. a multiple of 0.025).
pub fn bin_edge(k: usize) -> f64 {
    k as f64 / HISTOGRAM_BINS as f64
}

/// Left-closed bins `[k/40, (k+1)/40)`, with 1.0 folded into the last bin.
pub fn bin_index(confidence: f64) -> usize {
    let c = confidence.clamp(0.0, 1.0);
    let mut k = ((c * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    while k > 0 && bin_edge(k) > c {
        k -= 1;
    }
    while k + 1 < HISTOGRAM_BINS && bin_edge(k + 1) <= c {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Series {
    IdForeground = 0,
    Ood = 1,
    IdBackground = 2,
}

/// Confidence counts split by the actual group of each prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidenceHistogram {
    counts: [[u64; HISTOGRAM_BINS]; 3],
}

impl Default for ConfidenceHistogram {
    fn default() -> Self {
        Self {
            counts: [[0; HISTOGRAM_BINS]; 3],
        }
    }
}

impl ConfidenceHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, series: Series, confidence: f64) {
        self.counts[series as usize][bin_index(confidence)] += 1;
    }

    /// Add one matched image: predictions matched to FG objects go to the
    /// ID FG series, to OOD objects to the OOD series, the rest to ID BG.
    pub fn add_image(
        &mut self,
        preds: &[Prediction],
        gts: &[GroundTruthObject],
        matches: &MatchResult,
    ) {
        for pair in &matches.pairs {
            let series = match gts[pair.ground_truth].kind {
                ObjectKind::Foreground(_) => Series::IdForeground,
                ObjectKind::Ood => Series::Ood,
            };
            self.add(series, preds[pair.prediction].confidence());
        }
        for &pi in &matches.unmatched_predictions {
            self.add(Series::IdBackground, preds[pi].confidence());
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn counts(&self, series: Series) -> &[u64; HISTOGRAM_BINS] {
        &self.counts[series as usize]
    }

    pub fn total(&self, series: Series) -> u64 {
        self.counts(series).iter().sum()
    }

    /// Per-bin density in percent; all zeros for an empty series.
    pub fn density(&self, series: Series) -> [f64; HISTOGRAM_BINS] {
        let total = self.total(series);
        let mut out = [0.0; HISTOGRAM_BINS];
        if total > 0 {
            for (o, c) in out.iter_mut().zip(self.counts(series)) {
                *o = 100.0 * *c as f64 / total as f64;
            }
        }
        out
    }

    /// Densities in units of 1e-6 percent, rounded so a non-empty series
    /// sums to exactly 100.000000 (largest-remainder allocation).
    fn micro_density(&self, series: Series) -> [u64; HISTOGRAM_BINS] {
        const FULL: u128 = 100_000_000;
        let total = self.total(series) as u128;
        let mut out = [0u64; HISTOGRAM_BINS];
        if total == 0 {
            return out;
        }
        let mut rem: Vec<(u128, usize)> = Vec::with_capacity(HISTOGRAM_BINS);
        let mut assigned = 0u128;
        for (k, c) in self.counts(series).iter().enumerate() {
            let scaled = *c as u128 * FULL;
            out[k] = (scaled / total) as u64;
            assigned += scaled / total;
            rem.push((scaled % total, k));
        }
        rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, k) in rem.iter().take((FULL - assigned) as usize) {
            out[k] += 1;
        }
        out
    }

    /// CSV with header `bin_lo,bin_hi,id_fg,ood,id_bg`, densities in percent.
    pub fn to_csv(&self) -> String {
        let cols = [
            self.micro_density(Series::IdForeground),
            self.micro_density(Series::Ood),
            self.micro_density(Series::IdBackground),
        ];
        let micro = |v: u64| format!("{}.{:06}", v / 1_000_000, v % 1_000_000);
        let mut out = String::from("bin_lo,bin_hi,id_fg,ood,id_bg\n");
        for k in 0..HISTOGRAM_BINS {
            let _ = writeln!(
                out,
                "{:.3},{:.3},{},{},{}",
                bin_edge(k),
                bin_edge(k + 1),
                micro(cols[0][k]),
                micro(cols[1][k]),
                micro(cols[2][k])
            );
        }
        out
    }
}

/// Histogram for a single matched image (or any already-matched slice).
pub fn histogram(
    preds: &[Prediction],
    gts: &[GroundTruthObject],
    matches: &MatchResult,
) -> ConfidenceHistogram {
    let mut h = ConfidenceHistogram::new();
    h.add_image(preds, gts, matches);
    h
}
