use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Standard-deviation multiplier on top of He scaling; 0 for biases.
    init_gain_milli: u32,
}

impl ParamSpec {
    fn fan_in(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn conv(out: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize, k: usize, gain: f64) {
    out.push(ParamSpec {
        name: alloc::format!("{name}.weight"),
        shape: alloc::vec![c_out, c_in, k, k],
        init_gain_milli: (gain * 1000.0) as u32,
    });
    out.push(ParamSpec { name: alloc::format!("{name}.bias"), shape: alloc::vec![c_out], init_gain_milli: 0 });
}

fn encoder(out: &mut Vec<ParamSpec>, prefix: &str, cfg: &ModelConfig, c_out: usize) {
    let mut c = cfg.input_channels();
    for (i, w) in cfg.encoder_widths().enumerate() {
        conv(out, &alloc::format!("{prefix}.conv{i}"), c, w, 3, 1.0);
        c = w;
    }
    conv(out, &alloc::format!("{prefix}.proj"), c, c_out, 1, 0.5);
}

/// Every parameter tensor in the order used by checkpoints.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let h = cfg.hidden_channels;
    let m = cfg.motion_channels;
    encoder(&mut out, "feature", cfg, cfg.feature_channels);
    encoder(&mut out, "context", cfg, 2 * h);
    conv(&mut out, "motion.corr", cfg.lookup_channels(), m, 1, 1.0);
    conv(&mut out, "motion.flow", 2, m / 2, 3, 1.0);
    conv(&mut out, "motion.mix", m + m / 2, m - 2, 3, 1.0);
    conv(&mut out, "gru.gates", h + m + h, 2 * h, 3, 0.5);
    conv(&mut out, "gru.candidate", h + m + h, h, 3, 0.5);
    conv(&mut out, "head.hidden", h, 2 * h, 3, 1.0);
    conv(&mut out, "head.out", 2 * h, 2, 3, 0.1);
    out
}

/// Parameter tensors in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T: Real> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros_like(layout: &[ParamSpec]) -> Self {
        Self { tensors: layout.iter().map(|s| Tensor::zeros(s.shape.clone())).collect() }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params { tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn matches(&self, layout: &[ParamSpec]) -> bool {
        self.tensors.len() == layout.len() && self.tensors.iter().zip(layout).all(|(t, s)| t.shape() == s.shape)
    }
}

/// He-normal weights, zero biases.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Params<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = param_layout(cfg)
        .iter()
        .map(|spec| {
            if spec.init_gain_milli == 0 {
                return Tensor::zeros(spec.shape.clone());
            }
            let gain = spec.init_gain_milli as f64 / 1000.0;
            let std = gain * Float::sqrt(2.0 / spec.fan_in() as f64);
            let normal = Normal::new(0.0, std).expect("positive std");
            let data = (0..spec.numel()).map(|_| normal.sample(&mut rng) as f32).collect();
            Tensor::new(spec.shape.clone(), data).expect("layout shape")
        })
        .collect();
    Params { tensors }
}
