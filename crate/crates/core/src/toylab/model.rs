//! One-hidden-layer tanh network, `dim -> hidden -> classes`, softmax output.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::meloss::softmax;

/// Anything that maps a feature vector to class probabilities.
pub trait ConfidenceModel {
    fn probabilities(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Row-major `hidden x dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `classes x hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ToyModel {
    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn init<R: Rng>(dim: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let n1 = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("valid");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid");
        Self {
            dim,
            hidden,
            classes,
            w1: (0..hidden * dim).map(|_| n1.sample(rng)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..classes * hidden).map(|_| n2.sample(rng)).collect(),
            b2: vec![0.0; classes],
        }
    }

    /// Hidden activations and output logits.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.dim..(j + 1) * self.dim];
                (self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let z = (0..self.classes)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        (h, z)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Accumulate parameter gradients for one sample given `dL/dz`.
    pub fn backward(&self, x: &[f64], h: &[f64], dz: &[f64], grads: &mut ToyModel) {
        let mut dh = vec![0.0; self.hidden];
        for k in 0..self.classes {
            grads.b2[k] += dz[k];
            for j in 0..self.hidden {
                grads.w2[k * self.hidden + j] += dz[k] * h[j];
                dh[j] += dz[k] * self.w2[k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let da = dh[j] * (1.0 - h[j] * h[j]);
            grads.b1[j] += da;
            for i in 0..self.dim {
                grads.w1[j * self.dim + i] += da * x[i];
            }
        }
    }

    pub fn zeros_like(&self) -> ToyModel {
        ToyModel {
            dim: self.dim,
            hidden: self.hidden,
            classes: self.classes,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// All parameters, flattened in `w1, b1, w2, b2` order.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("parameter count");
            }
        }
    }

    /// `self -= lr * grads`.
    pub fn step(&mut self, grads: &ToyModel, lr: f64) {
        let g = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
        for (t, gt) in self.tensors_mut().into_iter().zip(g) {
            for (v, d) in t.iter_mut().zip(gt) {
                *v -= lr * d;
            }
        }
    }
}

impl ConfidenceModel for ToyModel {
    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}
