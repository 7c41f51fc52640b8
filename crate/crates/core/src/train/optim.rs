use alloc::vec::Vec;

use num_traits::Float;

use super::{OptimizerKind, TrainConfig};
use crate::model::Params;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

pub fn global_norm(grads: &[Vec<f32>]) -> f64 {
    let sq: f64 = grads.iter().flatten().map(|&g| g as f64 * g as f64).sum();
    Float::sqrt(sq)
}

/// Rescales `grads` so the global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f32>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Optimizer state. Moments are kept only for AdamW.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &Params<f32>) -> Self {
        let zeros = || match kind {
            OptimizerKind::AdamW => params.tensors.iter().map(|t| alloc::vec![0.0; t.numel()]).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self { kind, m: zeros(), v: zeros(), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn apply(&mut self, params: &mut Params<f32>, grads: &[Vec<f32>], lr: f64, cfg: &TrainConfig) {
        self.steps += 1;
        let decay = (1.0 - lr * cfg.weight_decay) as f32;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors.iter_mut().zip(grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g) {
                        *w = *w * decay - lr as f32 * d;
                    }
                }
            }
            OptimizerKind::AdamW => {
                let t = self.steps as i32;
                let step = (lr / (1.0 - Float::powi(BETA1, t))) as f32;
                let bias2 = Float::sqrt(1.0 - Float::powi(BETA2, t)) as f32;
                let (b1, b2) = (BETA1 as f32, BETA2 as f32);
                for (k, (p, g)) in params.tensors.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, w) in p.data_mut().iter_mut().enumerate() {
                        let d = g[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * d;
                        v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                        let denom = Float::sqrt(v[i]) / bias2 + EPS as f32;
                        *w = *w * decay - step * m[i] / denom;
                    }
                }
            }
        }
    }
}
