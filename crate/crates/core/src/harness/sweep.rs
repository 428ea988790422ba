//! Grid search over the threshold pair `(t_bg, t_fg)`.
//!
//! Matching does not depend on the thresholds, so a dataset is reduced once
//! to three sorted confidence populations plus the count of objects nobody
//! matched. Every grid point is then a handful of binary searches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{GroundTruthObject, MatchResult, ObjectKind, Prediction};
use crate::metrics::SeparabilityScores;
use crate::taxonomy::{ExtendedConfusionMatrix, ThresholdConfig};

pub const DEFAULT_STEP: f64 = 0.01;

/// Confidences grouped by the actual kind of what each prediction hit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScorePopulations {
    /// Predictions matched to foreground objects.
    pub fg: Vec<f64>,
    /// Predictions matched to OOD objects.
    pub ood: Vec<f64>,
    /// Predictions that matched nothing.
    pub spurious: Vec<f64>,
    pub missed_fg: u64,
    pub missed_ood: u64,
}

impl ScorePopulations {
    pub fn add_image(
        &mut self,
        preds: &[Prediction],
        gts: &[GroundTruthObject],
        matches: &MatchResult,
    ) {
        for pair in &matches.pairs {
            let c = preds[pair.prediction].confidence();
            match gts[pair.ground_truth].kind {
                ObjectKind::Foreground(_) => self.fg.push(c),
                ObjectKind::Ood => self.ood.push(c),
            }
        }
        for &gi in &matches.unmatched_ground_truth {
            match gts[gi].kind {
                ObjectKind::Foreground(_) => self.missed_fg += 1,
                ObjectKind::Ood => self.missed_ood += 1,
            }
        }
        self.spurious.extend(
            matches
                .unmatched_predictions
                .iter()
                .map(|&pi| preds[pi].confidence()),
        );
    }

    /// Sort every population; required before [`Self::matrix_at`].
    pub fn finish(mut self) -> Self {
        for v in [&mut self.fg, &mut self.ood, &mut self.spurious] {
            v.sort_by(f64::total_cmp);
        }
        self
    }

    /// Confusion matrix at one operating point. Populations must be sorted.
    pub fn matrix_at(&self, t: &ThresholdConfig) -> ExtendedConfusionMatrix {
        let split = |v: &[f64]| {
            let below_bg = v.partition_point(|&c| c < t.t_id_bg) as u64;
            let below_fg = v.partition_point(|&c| c < t.t_id_fg) as u64;
            (below_bg, below_fg - below_bg, v.len() as u64 - below_fg)
        };
        let (fg_bg, fg_ood, fg_fg) = split(&self.fg);
        let (ood_bg, ood_ood, ood_fg) = split(&self.ood);
        let (_, sp_ood, sp_fg) = split(&self.spurious);
        ExtendedConfusionMatrix {
            tp: fg_fg,
            fn_: self.missed_fg + fg_bg,
            fo_p: fg_ood,
            to: ood_ood,
            fn_o: self.missed_ood + ood_bg,
            fp_o: ood_fg,
            fp: sp_fg,
            fo_n: sp_ood,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t_id_bg: f64,
    pub t_id_fg: f64,
    pub obs: f64,
    pub ofs: f64,
    pub s: f64,
}

impl SweepPoint {
    pub fn thresholds(&self) -> ThresholdConfig {
        ThresholdConfig {
            t_id_bg: self.t_id_bg,
            t_id_fg: self.t_id_fg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub step: f64,
    pub beta: f64,
    pub grid: Vec<SweepPoint>,
    pub best: SweepPoint,
}

/// Threshold values `{0, step, 2·step, …, 1}`.
///
/// When `1/step` is an integer `n` the values are computed as `k / n` so
/// that, e.g., step 0.01 yields exactly the doubles for `0.39` and `0.42`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::input(format!("sweep step {step} outside (0, 0.5]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() < 1e-9 {
        let n = n as usize;
        return Ok((0..=n).map(|k| k as f64 / n as f64).collect());
    }
    let mut grid: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|t| *t <= 1.0)
        .collect();
    if *grid.last().expect("grid starts at 0") < 1.0 {
        grid.push(1.0);
    }
    Ok(grid)
}

/// Evaluate S on every ordered grid pair and keep the best one.
/// Ties go to the smallest `t_bg`, then the smallest `t_fg`.
pub fn sweep_populations(pop: &ScorePopulations, beta: f64, step: f64) -> Result<SweepResult> {
    let values = threshold_grid(step)?;
    let mut grid = Vec::with_capacity(values.len() * (values.len() + 1) / 2);
    let mut best: Option<SweepPoint> = None;
    for (i, &t_bg) in values.iter().enumerate() {
        for &t_fg in &values[i..] {
            let t = ThresholdConfig {
                t_id_bg: t_bg,
                t_id_fg: t_fg,
            };
            let sc = SeparabilityScores::from_matrix(&pop.matrix_at(&t), beta)?;
            let point = SweepPoint {
                t_id_bg: t_bg,
                t_id_fg: t_fg,
                obs: sc.obs,
                ofs: sc.ofs,
                s: sc.s,
            };
            if best.is_none_or(|b| point.s > b.s) {
                best = Some(point);
            }
            grid.push(point);
        }
    }
    Ok(SweepResult {
        step,
        beta,
        grid,
        best: best.expect("grid is never empty"),
    })
}
