//! Desk-scale training lab for the margin entropy loss.
//!
//! A small classifier is trained on synthetic clusters, either with plain
//! cross-entropy (foreground) plus a uniform target (background), or with the
//! ME term added on top. Each validation point is then treated as one
//! detection whose confidence is its max softmax score, and the usual
//! Separability pipeline runs on it.

pub mod data;
pub mod model;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::sweep::{sweep_populations, ScorePopulations, DEFAULT_STEP};
use crate::meloss::{log_softmax, me_loss_grad, softmax, total_loss, LossWeights};
use crate::metrics::{ConfidenceHistogram, SeparabilityScores, Series};
use crate::taxonomy::{ExtendedConfusionMatrix, ThresholdConfig};

pub use data::{generate, DatasetSpec, Sample, SampleGroup, SyntheticDataset};
pub use model::{ConfidenceModel, ToyModel};

const INIT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Everything one toy run needs, as read from the experiment config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub m: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub use_me: bool,
    /// Weight of OBS vs OFS in S.
    pub beta: f64,
    pub sweep_step: f64,
    pub data: DatasetSpec,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 200,
            lr: 0.3,
            batch_size: 64,
            hidden: 16,
            m: 0.1,
            beta1: 1.0,
            beta2: 1.0,
            use_me: true,
            beta: 1.0,
            sweep_step: DEFAULT_STEP,
            data: DatasetSpec::default(),
        }
    }
}

impl ToyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::input(format!("toy config: {e}")))
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            beta1: self.beta1,
            beta2: self.beta2,
            margin: self.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::input("batch size and hidden width must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::input("learning rate must be positive"));
        }
        self.data.validate()
    }
}

/// Loss over `samples` and its gradient.
///
/// `L = β1 · (CE(FG) + CE(BG, uniform)) + β2 · L_me(FG, OOD)`, each
/// cross-entropy averaged over its own group. OOD samples only enter through
/// the ME term, so without it they contribute nothing.
pub fn loss_and_grad(
    model: &ToyModel,
    samples: &[&Sample],
    weights: &LossWeights,
    use_me: bool,
) -> (f64, ToyModel) {
    let mut grads = model.zeros_like();
    let c = model.classes as f64;

    let mut fwd = Vec::with_capacity(samples.len());
    let (mut n_fg, mut n_bg) = (0usize, 0usize);
    for s in samples {
        fwd.push(model.forward(&s.features));
        match s.group {
            SampleGroup::Foreground(_) => n_fg += 1,
            SampleGroup::Background => n_bg += 1,
            SampleGroup::Ood => {}
        }
    }

    let mut dz: Vec<Vec<f64>> = vec![vec![0.0; model.classes]; samples.len()];
    let (mut ce_fg, mut ce_bg) = (0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        let z = &fwd[i].1;
        match s.group {
            SampleGroup::Foreground(k) => {
                ce_fg -= log_softmax(z)[k];
                let p = softmax(z);
                for (j, d) in dz[i].iter_mut().enumerate() {
                    let y = if j == k { 1.0 } else { 0.0 };
                    *d += weights.beta1 * (p[j] - y) / n_fg as f64;
                }
            }
            SampleGroup::Background => {
                ce_bg -= log_softmax(z).iter().sum::<f64>() / c;
                let p = softmax(z);
                for (j, d) in dz[i].iter_mut().enumerate() {
                    *d += weights.beta1 * (p[j] - 1.0 / c) / n_bg as f64;
                }
            }
            SampleGroup::Ood => {}
        }
    }
    if n_fg > 0 {
        ce_fg /= n_fg as f64;
    }
    if n_bg > 0 {
        ce_bg /= n_bg as f64;
    }

    let mut l_me = 0.0;
    if use_me {
        let mut fg_idx = Vec::new();
        let mut ood_idx = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            match s.group {
                SampleGroup::Foreground(_) => fg_idx.push(i),
                SampleGroup::Ood => ood_idx.push(i),
                SampleGroup::Background => {}
            }
        }
        let fg_logits: Vec<Vec<f64>> = fg_idx.iter().map(|&i| fwd[i].1.clone()).collect();
        let ood_logits: Vec<Vec<f64>> = ood_idx.iter().map(|&i| fwd[i].1.clone()).collect();
        let me = me_loss_grad(&fg_logits, &ood_logits, weights.margin);
        l_me = me.loss;
        for (idx, g) in fg_idx
            .iter()
            .zip(&me.fg_grad)
            .chain(ood_idx.iter().zip(&me.ood_grad))
        {
            for (d, gj) in dz[*idx].iter_mut().zip(g) {
                *d += weights.beta2 * gj;
            }
        }
    }

    for (i, s) in samples.iter().enumerate() {
        if matches!(s.group, SampleGroup::Ood) && !use_me {
            continue;
        }
        model.backward(&s.features, &fwd[i].0, &dz[i], &mut grads);
    }

    let loss = if use_me {
        total_loss(0.0, ce_fg + ce_bg, l_me, weights)
    } else {
        total_loss(
            0.0,
            ce_fg + ce_bg,
            0.0,
            &LossWeights {
                beta2: 0.0,
                ..*weights
            },
        )
    };
    (loss, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// Full-training-set loss before training, then after every epoch.
    pub trace: Vec<f64>,
}

/// Plain mini-batch gradient descent; deterministic in `cfg.seed`.
pub fn train(dataset: &SyntheticDataset, cfg: &ToyConfig, use_me: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::input("training split is empty"));
    }
    if use_me && !dataset.train.iter().any(|s| s.group == SampleGroup::Ood) {
        return Err(Error::input(
            "ME training needs OOD samples in the training split",
        ));
    }
    let weights = cfg.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_STREAM);
    let mut model = ToyModel::init(
        dataset.spec.dim,
        cfg.hidden,
        dataset.spec.n_classes,
        &mut rng,
    );

    let all: Vec<&Sample> = dataset.train.iter().collect();
    let full_loss = |m: &ToyModel| loss_and_grad(m, &all, &weights, use_me).0;

    let mut trace = vec![full_loss(&model)];
    let mut order: Vec<usize> = (0..all.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| all[i]).collect();
            let (loss, grads) = loss_and_grad(&model, &batch, &weights, use_me);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            model.step(&grads, cfg.lr);
        }
        let loss = full_loss(&model);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
    }
    Ok(TrainOutcome { model, trace })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    Fixed(ThresholdConfig),
    Sweep { step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEvaluation {
    pub thresholds: ThresholdConfig,
    pub matrix: ExtendedConfusionMatrix,
    pub scores: SeparabilityScores,
    pub histogram: ConfidenceHistogram,
    pub mean_entropy_fg: f64,
    pub mean_entropy_ood: f64,
}

impl ToyEvaluation {
    /// `mean_H(OOD) - mean_H(FG)` on the validation split.
    pub fn entropy_gap(&self) -> f64 {
        self.mean_entropy_ood - self.mean_entropy_fg
    }
}

fn entropy_of(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// Validation points act as detections: FG points match FG objects, OOD
/// points match OOD objects and background points match nothing.
pub fn score_populations<M: ConfidenceModel + ?Sized>(
    model: &M,
    samples: &[Sample],
) -> (ScorePopulations, Vec<(SampleGroup, Vec<f64>)>) {
    let mut pop = ScorePopulations::default();
    let mut probs = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model.probabilities(&s.features);
        let conf = p.iter().copied().fold(0.0, f64::max);
        match s.group {
            SampleGroup::Foreground(_) => pop.fg.push(conf),
            SampleGroup::Ood => pop.ood.push(conf),
            SampleGroup::Background => pop.spurious.push(conf),
        }
        probs.push((s.group, p));
    }
    (pop.finish(), probs)
}

pub fn evaluate_toy<M: ConfidenceModel + ?Sized>(
    model: &M,
    validation: &[Sample],
    choice: ThresholdChoice,
    beta: f64,
) -> Result<ToyEvaluation> {
    let (pop, probs) = score_populations(model, validation);
    let thresholds = match choice {
        ThresholdChoice::Fixed(t) => t,
        ThresholdChoice::Sweep { step } => sweep_populations(&pop, beta, step)?.best.thresholds(),
    };
    let matrix = pop.matrix_at(&thresholds);
    let scores = SeparabilityScores::from_matrix(&matrix, beta)?;

    let mut histogram = ConfidenceHistogram::new();
    let (mut h_fg, mut n_fg, mut h_ood, mut n_ood) = (0.0, 0usize, 0.0, 0usize);
    for (group, p) in &probs {
        let conf = p.iter().copied().fold(0.0, f64::max);
        let series = match group {
            SampleGroup::Foreground(_) => {
                h_fg += entropy_of(p);
                n_fg += 1;
                Series::IdForeground
            }
            SampleGroup::Ood => {
                h_ood += entropy_of(p);
                n_ood += 1;
                Series::Ood
            }
            SampleGroup::Background => Series::IdBackground,
        };
        histogram.add(series, conf);
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(ToyEvaluation {
        thresholds,
        matrix,
        scores,
        histogram,
        mean_entropy_fg: mean(h_fg, n_fg),
        mean_entropy_ood: mean(h_ood, n_ood),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub seed: u64,
    pub use_me: bool,
    pub final_loss: f64,
    pub evaluation: ToyEvaluation,
}

/// Generate, train and evaluate (best swept thresholds) for one seed.
pub fn run_seed(cfg: &ToyConfig, seed: u64, use_me: bool) -> Result<ToyRun> {
    let dataset = generate(seed, &cfg.data)?;
    let run_cfg = ToyConfig {
        seed,
        ..cfg.clone()
    };
    let out = train(&dataset, &run_cfg, use_me)?;
    let evaluation = evaluate_toy(
        &out.model,
        &dataset.validation,
        ThresholdChoice::Sweep {
            step: cfg.sweep_step,
        },
        cfg.beta,
    )?;
    Ok(ToyRun {
        seed,
        use_me,
        final_loss: *out.trace.last().expect("trace has the initial loss"),
        evaluation,
    })
}

/// Independent runs for consecutive seeds starting at `cfg.seed`, in parallel.
pub fn run_experiment(cfg: &ToyConfig, n_seeds: usize, use_me: bool) -> Result<Vec<ToyRun>> {
    use rayon::prelude::*;
    (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| run_seed(cfg, cfg.seed + i, use_me))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
