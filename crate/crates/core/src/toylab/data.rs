//! Gaussian-cluster data standing in for detector features.
//!
//! Layout in the first two feature dimensions: background points fill a disk
//! around the origin, foreground class means sit evenly on a ring, and OOD
//! clusters sit on a wider ring. OOD clusters alternate between the training
//! and the validation split so validation OOD is never seen in training.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleGroup {
    Foreground(usize),
    Background,
    Ood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub group: SampleGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub dim: usize,
    pub n_classes: usize,
    /// Foreground points per class, in each split.
    pub points_per_class: usize,
    pub fg_radius: f64,
    pub fg_std: f64,
    /// Background points in each split.
    pub bg_points: usize,
    pub bg_radius: f64,
    /// OOD clusters per split; the two splits interleave on one ring.
    pub ood_clusters: usize,
    pub ood_points_per_cluster: usize,
    pub ood_radius: f64,
    pub ood_std: f64,
    pub ood_phase: f64,
    /// Minimum distance between any OOD mean and any foreground mean.
    pub min_separation: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            n_classes: 3,
            points_per_class: 200,
            fg_radius: 3.0,
            fg_std: 0.5,
            bg_points: 300,
            bg_radius: 1.2,
            ood_clusters: 12,
            ood_points_per_cluster: 12,
            ood_radius: 6.0,
            ood_std: 0.5,
            ood_phase: 0.0,
            min_separation: 2.0,
        }
    }
}

impl DatasetSpec {
    pub fn fg_means(&self) -> Vec<[f64; 2]> {
        (0..self.n_classes)
            .map(|k| {
                let a = TAU * k as f64 / self.n_classes as f64;
                [self.fg_radius * a.cos(), self.fg_radius * a.sin()]
            })
            .collect()
    }

    /// `(training means, validation means)`.
    pub fn ood_means(&self) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let total = 2 * self.ood_clusters;
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for j in 0..total {
            let a = self.ood_phase + TAU * j as f64 / total as f64;
            let m = [self.ood_radius * a.cos(), self.ood_radius * a.sin()];
            if j % 2 == 0 {
                train.push(m);
            } else {
                val.push(m);
            }
        }
        (train, val)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::input("feature dimension must be at least 2"));
        }
        if self.n_classes < 2 {
            return Err(Error::input("need at least two foreground classes"));
        }
        if self.ood_clusters < 1 {
            return Err(Error::input("need at least one OOD cluster per split"));
        }
        let positive = [self.fg_std, self.ood_std, self.bg_radius];
        let finite = [
            self.fg_radius,
            self.ood_radius,
            self.ood_phase,
            self.min_separation,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || finite.iter().any(|v| !v.is_finite())
        {
            return Err(Error::input(
                "radii and spreads must be finite, spreads positive",
            ));
        }
        let dist =
            |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let fg = self.fg_means();
        for (i, a) in fg.iter().enumerate() {
            if fg[i + 1..].iter().any(|b| dist(a, b) < 1e-9) {
                return Err(Error::input("foreground cluster means coincide"));
            }
        }
        let (tr, va) = self.ood_means();
        for o in tr.iter().chain(&va) {
            if fg.iter().any(|f| dist(o, f) < self.min_separation) {
                return Err(Error::input(format!(
                    "OOD mean ({:.3}, {:.3}) closer than {} to a foreground mean",
                    o[0], o[1], self.min_separation
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl SyntheticDataset {
    pub fn count(split: &[Sample], pred: impl Fn(SampleGroup) -> bool) -> usize {
        split.iter().filter(|s| pred(s.group)).count()
    }
}

fn gaussian_point(rng: &mut ChaCha8Rng, mean: &[f64; 2], std: f64, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, std).expect("positive std");
    (0..dim)
        .map(|i| mean.get(i).copied().unwrap_or(0.0) + n.sample(rng))
        .collect()
}

fn disk_point(rng: &mut ChaCha8Rng, radius: f64, dim: usize, extra_std: f64) -> Vec<f64> {
    let r = radius * rng.random::<f64>().sqrt();
    let a = TAU * rng.random::<f64>();
    let n = Normal::new(0.0, extra_std).expect("positive std");
    let mut v = vec![r * a.cos(), r * a.sin()];
    v.extend((2..dim).map(|_| n.sample(rng)));
    v
}

fn split(spec: &DatasetSpec, rng: &mut ChaCha8Rng, ood: &[[f64; 2]]) -> Vec<Sample> {
    let mut out = Vec::new();
    for (k, mean) in spec.fg_means().iter().enumerate() {
        for _ in 0..spec.points_per_class {
            out.push(Sample {
                features: gaussian_point(rng, mean, spec.fg_std, spec.dim),
                group: SampleGroup::Foreground(k),
            });
        }
    }
    for _ in 0..spec.bg_points {
        out.push(Sample {
            features: disk_point(rng, spec.bg_radius, spec.dim, spec.fg_std),
            group: SampleGroup::Background,
        });
    }
    for mean in ood {
        for _ in 0..spec.ood_points_per_cluster {
            out.push(Sample {
                features: gaussian_point(rng, mean, spec.ood_std, spec.dim),
                group: SampleGroup::Ood,
            });
        }
    }
    out
}

/// Deterministic in `seed`.
pub fn generate(seed: u64, spec: &DatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ood_train, ood_val) = spec.ood_means();
    let train = split(spec, &mut rng, &ood_train);
    let validation = split(spec, &mut rng, &ood_val);
    Ok(SyntheticDataset {
        spec: spec.clone(),
        seed,
        train,
        validation,
    })
}
