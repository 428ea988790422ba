//! Whole-dataset evaluation: per-image matching, reduction by matrix merge,
//! and the threshold-independent metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::report::{DatasetCounts, EvalReport};
use crate::harness::sweep::{sweep_populations, ScorePopulations, SweepResult};
use crate::matching::{
    group_by_image, match_image, GroundTruthObject, ImageRecords, MatchConfig, MatchResult,
    ObjectKind, Prediction,
};
use crate::metrics::{
    auroc, fpr_at_tpr, mean_average_precision, ConfidenceHistogram, SeparabilityScores,
};
use crate::taxonomy::{accumulate, ExtendedConfusionMatrix, ThresholdConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub n_classes: usize,
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<GroundTruthObject>,
}

impl Dataset {
    pub fn new(
        n_classes: usize,
        predictions: Vec<Prediction>,
        ground_truth: Vec<GroundTruthObject>,
    ) -> Result<Self> {
        if let Some(p) = predictions.iter().find(|p| p.scores().len() != n_classes) {
            return Err(Error::input(format!(
                "prediction on image {:?} has {} scores, expected {n_classes}",
                p.image_id,
                p.scores().len()
            )));
        }
        for g in &ground_truth {
            if let ObjectKind::Foreground(c) = g.kind {
                if c >= n_classes {
                    return Err(Error::input(format!(
                        "object on image {:?} has class {c}, but there are only {n_classes} classes",
                        g.image_id
                    )));
                }
            }
        }
        Ok(Self {
            n_classes,
            predictions,
            ground_truth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub matching: MatchConfig,
    pub thresholds: ThresholdConfig,
    pub beta: f64,
    pub tpr_target: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            thresholds: ThresholdConfig {
                t_id_bg: 0.39,
                t_id_fg: 0.42,
            },
            beta: 1.0,
            tpr_target: 0.95,
        }
    }
}

/// A dataset split by image with each image already matched.
#[derive(Debug, Clone)]
pub struct MatchedDataset {
    pub n_classes: usize,
    pub images: Vec<ImageRecords>,
    pub matches: Vec<MatchResult>,
}

fn run_with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Invariant(format!("thread pool: {e}"))),
    }
}

impl MatchedDataset {
    /// Match every image. `workers = None` uses the global rayon pool;
    /// the result does not depend on the worker count.
    pub fn build(dataset: &Dataset, cfg: &MatchConfig, workers: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let images = group_by_image(&dataset.predictions, &dataset.ground_truth);
        let matches = run_with_workers(workers, || {
            images
                .par_iter()
                .map(|img| match_image(&img.predictions, &img.ground_truth, cfg))
                .collect::<Result<Vec<_>>>()
        })??;
        Ok(Self {
            n_classes: dataset.n_classes,
            images,
            matches,
        })
    }

    fn zipped(&self) -> impl ParallelIterator<Item = (&ImageRecords, &MatchResult)> {
        self.images.par_iter().zip(self.matches.par_iter())
    }

    pub fn confusion(
        &self,
        t: &ThresholdConfig,
        workers: Option<usize>,
    ) -> Result<ExtendedConfusionMatrix> {
        run_with_workers(workers, || {
            self.zipped()
                .map(|(img, m)| accumulate(m, &img.predictions, &img.ground_truth, t))
                .try_reduce(ExtendedConfusionMatrix::zero, |a, b| Ok(a + b))
        })?
    }

    pub fn populations(&self) -> ScorePopulations {
        let mut pop = ScorePopulations::default();
        for (img, m) in self.images.iter().zip(&self.matches) {
            pop.add_image(&img.predictions, &img.ground_truth, m);
        }
        pop.finish()
    }

    pub fn histogram(&self) -> ConfidenceHistogram {
        let mut h = ConfidenceHistogram::new();
        for (img, m) in self.images.iter().zip(&self.matches) {
            h.add_image(&img.predictions, &img.ground_truth, m);
        }
        h
    }

    pub fn counts(&self) -> DatasetCounts {
        let mut c = DatasetCounts {
            images: self.images.len() as u64,
            ..Default::default()
        };
        for img in &self.images {
            c.predictions += img.predictions.len() as u64;
            for g in &img.ground_truth {
                match g.kind {
                    ObjectKind::Foreground(_) => c.fg_objects += 1,
                    ObjectKind::Ood => c.ood_objects += 1,
                }
            }
        }
        c
    }
}

/// Full report at one operating point.
pub fn evaluate(dataset: &Dataset, cfg: &EvalConfig, workers: Option<usize>) -> Result<EvalReport> {
    let matched = MatchedDataset::build(dataset, &cfg.matching, workers)?;
    evaluate_matched(&matched, cfg, workers)
}

pub fn evaluate_matched(
    matched: &MatchedDataset,
    cfg: &EvalConfig,
    workers: Option<usize>,
) -> Result<EvalReport> {
    let confusion = matched.confusion(&cfg.thresholds, workers)?;
    let separability = SeparabilityScores::from_matrix(&confusion, cfg.beta)?;
    let (ap_per_class, map) = mean_average_precision(
        &matched.images,
        matched.n_classes,
        cfg.matching.overlap_threshold,
    );

    let pop = matched.populations();
    let (auroc_v, fpr) = if pop.fg.is_empty() || pop.ood.is_empty() {
        (None, None)
    } else {
        (
            Some(auroc(&pop.fg, &pop.ood)?),
            Some(fpr_at_tpr(&pop.fg, &pop.ood, cfg.tpr_target)?),
        )
    };

    let report = EvalReport {
        label: String::from("model"),
        thresholds: cfg.thresholds,
        matching: cfg.matching,
        confusion,
        separability,
        ap_iou: cfg.matching.overlap_threshold,
        ap_per_class,
        map,
        auroc: auroc_v,
        tpr_target: cfg.tpr_target,
        fpr_at_tpr: fpr,
        counts: matched.counts(),
        histogram: None,
    };
    report.check()?;
    Ok(report)
}

/// Sweep `(t_bg, t_fg)` over a regular grid, reusing one matching.
pub fn sweep_thresholds(matched: &MatchedDataset, beta: f64, step: f64) -> Result<SweepResult> {
    sweep_populations(&matched.populations(), beta, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn bx(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, x + 10.0, 10.0).unwrap()
    }

    fn scene() -> Dataset {
        let gts = vec![
            GroundTruthObject::new("a", bx(0.0), ObjectKind::Foreground(0)),
            GroundTruthObject::new("a", bx(100.0), ObjectKind::Ood),
            GroundTruthObject::new("b", bx(0.0), ObjectKind::Foreground(1)),
        ];
        let preds = vec![
            Prediction::new("a", bx(0.0), vec![0.9, 0.1]).unwrap(),
            Prediction::new("a", bx(100.0), vec![0.3, 0.41]).unwrap(),
            Prediction::new("b", bx(0.0), vec![0.05, 0.95]).unwrap(),
            Prediction::new("c", bx(50.0), vec![0.6, 0.4]).unwrap(),
        ];
        Dataset::new(2, preds, gts).unwrap()
    }

    #[test]
    fn evaluates_a_small_scene() {
        let r = evaluate(&scene(), &EvalConfig::default(), Some(1)).unwrap();
        assert_eq!(
            r.confusion,
            ExtendedConfusionMatrix {
                tp: 2,
                to: 1,
                fp: 1,
                ..Default::default()
            }
        );
        assert_eq!(r.separability.s, 1.0);
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.auroc, Some(1.0));
        assert_eq!(r.fpr_at_tpr, Some(0.0));
        assert_eq!(r.counts.images, 3);
        assert_eq!(r.counts.fg_objects, 2);
    }

    #[test]
    fn class_and_score_length_checked() {
        let b = bx(0.0);
        assert!(
            Dataset::new(2, vec![Prediction::new("a", b, vec![0.1]).unwrap()], vec![]).is_err()
        );
        assert!(Dataset::new(
            2,
            vec![],
            vec![GroundTruthObject::new("a", b, ObjectKind::Foreground(2))]
        )
        .is_err());
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let d = scene();
        let one = evaluate(&d, &EvalConfig::default(), Some(1)).unwrap();
        let four = evaluate(&d, &EvalConfig::default(), Some(4)).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn sweep_agrees_with_direct_accumulation() {
        let m = MatchedDataset::build(&scene(), &MatchConfig::default(), None).unwrap();
        let sweep = sweep_thresholds(&m, 1.0, 0.05).unwrap();
        for p in sweep.grid.iter().step_by(17) {
            let direct = m.confusion(&p.thresholds(), None).unwrap();
            let sc = SeparabilityScores::from_matrix(&direct, 1.0).unwrap();
            assert_eq!(sc.s, p.s);
        }
    }
}
