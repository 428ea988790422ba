//! Shannon entropy, the margin entropy (ME) loss and its gradient with
//! respect to classifier logits.
//!
//! Entropy is measured in nats. The ME term is a hinge on the gap between
//! the mean entropy of OOD samples and the mean entropy of foreground
//! samples:
//!
//! ```text
//! L_me = max(m + mean_H(FG) - mean_H(OOD), 0)
//! ```
//!
//! It is zero for any batch lacking either group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-9;

/// A softmax output: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::input("empty probability vector"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input(
                "probabilities must be finite and non-negative",
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::input(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self(softmax(logits))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: 1.0,
            margin: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.beta1) && ok(self.beta2) && ok(self.margin)) {
            return Err(Error::input(
                "loss weights and margin must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Supervision groups of one batch. Either list may be empty.
#[derive(Debug, Clone, Default)]
pub struct BatchGroups {
    pub fg_samples: Vec<ProbabilityVector>,
    pub ood_samples: Vec<ProbabilityVector>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// `ln softmax(z)`, computed without taking the log of a rounded probability.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &ProbabilityVector) -> f64 {
    entropy_unchecked(&p.0).max(0.0)
}

/// Entropy of `softmax(logits)` using log-probabilities directly.
pub fn entropy_from_logits(logits: &[f64]) -> f64 {
    let logp = log_softmax(logits);
    -logp.iter().map(|l| l.exp() * l).sum::<f64>()
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

/// Hinge on the entropy gap; 0 when either group is empty.
pub fn me_loss(groups: &BatchGroups, margin: f64) -> f64 {
    if groups.fg_samples.is_empty() || groups.ood_samples.is_empty() {
        return 0.0;
    }
    let h_fg = mean(groups.fg_samples.iter().map(entropy));
    let h_ood = mean(groups.ood_samples.iter().map(entropy));
    me_hinge(h_fg, h_ood, margin)
}

/// `max(m + h_fg - h_ood, 0)`.
pub fn me_hinge(h_fg: f64, h_ood: f64, margin: f64) -> f64 {
    (margin + h_fg - h_ood).max(0.0)
}

/// `L_loc + β1 · L_cls + β2 · L_me`.
pub fn total_loss(l_loc: f64, l_cls: f64, l_me: f64, w: &LossWeights) -> f64 {
    l_loc + w.beta1 * l_cls + w.beta2 * l_me
}

/// `∂H/∂z_j = -p_j (ln p_j + H)` for `p = softmax(z)`.
pub fn entropy_grad_logits(logits: &[f64]) -> Vec<f64> {
    let logp = log_softmax(logits);
    let h = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
    logp.iter().map(|l| -l.exp() * (l + h)).collect()
}

/// ME loss evaluated from logits, with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MeLossGrad {
    pub loss: f64,
    /// Signed hinge argument `m + mean_H(FG) - mean_H(OOD)`.
    pub gap: f64,
    pub fg_grad: Vec<Vec<f64>>,
    pub ood_grad: Vec<Vec<f64>>,
}

impl MeLossGrad {
    pub fn is_active(&self) -> bool {
        self.gap > 0.0
    }
}

/// ME loss and its gradient with respect to every logit of both groups.
///
/// At the kink (`gap == 0`) the zero branch is taken.
pub fn me_loss_grad(fg_logits: &[Vec<f64>], ood_logits: &[Vec<f64>], margin: f64) -> MeLossGrad {
    let zeros = |rows: &[Vec<f64>]| rows.iter().map(|r| vec![0.0; r.len()]).collect::<Vec<_>>();
    let mut out = MeLossGrad {
        loss: 0.0,
        gap: f64::NEG_INFINITY,
        fg_grad: zeros(fg_logits),
        ood_grad: zeros(ood_logits),
    };
    if fg_logits.is_empty() || ood_logits.is_empty() {
        return out;
    }
    let h_fg = mean(fg_logits.iter().map(|z| entropy_from_logits(z)));
    let h_ood = mean(ood_logits.iter().map(|z| entropy_from_logits(z)));
    out.gap = margin + h_fg - h_ood;
    if out.gap <= 0.0 {
        return out;
    }
    out.loss = out.gap;

    let w_fg = 1.0 / fg_logits.len() as f64;
    for (g, z) in out.fg_grad.iter_mut().zip(fg_logits) {
        for (gi, d) in g.iter_mut().zip(entropy_grad_logits(z)) {
            *gi = w_fg * d;
        }
    }
    let w_ood = -1.0 / ood_logits.len() as f64;
    for (g, z) in out.ood_grad.iter_mut().zip(ood_logits) {
        for (gi, d) in g.iter_mut().zip(entropy_grad_logits(z)) {
            *gi = w_ood * d;
        }
    }
    out
}

/// Outcome of a finite-difference check of [`me_loss_grad`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckSummary {
    pub trials: usize,
    pub checked: usize,
    pub skipped_near_kink: usize,
    pub active: usize,
    pub max_rel_error: f64,
}

/// Max-norm relative error `|a - n|_inf / max(|a|_inf, |n|_inf)`; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Randomized gradient check against central differences.
///
/// Each trial draws a batch with 2..=8 classes and 1..=8 samples per group,
/// logits from N(0, 2²) and a margin in [0, 2]. Trials whose hinge argument
/// lies within `kink_tol` of zero are skipped.
pub fn gradcheck(trials: usize, seed: u64, step: f64, kink_tol: f64) -> GradCheckSummary {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut summary = GradCheckSummary {
        trials,
        checked: 0,
        skipped_near_kink: 0,
        active: 0,
        max_rel_error: 0.0,
    };

    for _ in 0..trials {
        let n_classes = rng.random_range(2..=8usize);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let n = rng.random_range(1..=8usize);
            (0..n)
                .map(|_| (0..n_classes).map(|_| normal.sample(rng)).collect())
                .collect()
        };
        let mut fg = draw(&mut rng);
        let mut ood = draw(&mut rng);
        let margin = rng.random_range(0.0..2.0);

        let res = me_loss_grad(&fg, &ood, margin);
        if res.gap.abs() < kink_tol {
            summary.skipped_near_kink += 1;
            continue;
        }
        summary.checked += 1;
        if res.is_active() {
            summary.active += 1;
        }

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for group in 0..2 {
            let rows = if group == 0 { fg.len() } else { ood.len() };
            for r in 0..rows {
                for c in 0..n_classes {
                    let a = if group == 0 {
                        res.fg_grad[r][c]
                    } else {
                        res.ood_grad[r][c]
                    };
                    let cell = |fg: &mut Vec<Vec<f64>>, ood: &mut Vec<Vec<f64>>, v: f64| {
                        if group == 0 {
                            fg[r][c] += v;
                        } else {
                            ood[r][c] += v;
                        }
                    };
                    cell(&mut fg, &mut ood, step);
                    let plus = me_loss_grad(&fg, &ood, margin).loss;
                    cell(&mut fg, &mut ood, -2.0 * step);
                    let minus = me_loss_grad(&fg, &ood, margin).loss;
                    cell(&mut fg, &mut ood, step);
                    analytic.push(a);
                    numeric.push((plus - minus) / (2.0 * step));
                }
            }
        }
        summary.max_rel_error = summary
            .max_rel_error
            .max(relative_error(&analytic, &numeric));
    }
    summary
}
