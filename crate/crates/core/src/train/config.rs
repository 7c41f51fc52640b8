use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Schedule {
    Constant,
    /// Linear warmup from `lr / 25` over the first 5% of steps, then linear
    /// decay towards zero at `total_steps`.
    OneCycle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay.
    AdamW,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Square crop side in pixels, 0 for the full frame.
    pub crop_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub total_steps: usize,
    /// Seeds batch order and crop positions.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            crop_size: 0,
            learning_rate: 4e-4,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            schedule: Schedule::OneCycle,
            optimizer: OptimizerKind::AdamW,
            total_steps: 1000,
            seed: 0,
        }
    }
}

pub(crate) const WARMUP_FRACTION: f64 = 0.05;
const WARMUP_START_DIV: f64 = 25.0;

impl TrainConfig {
    pub fn validate(&self, stride: usize) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(alloc::format!("train: {m}")));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.crop_size % stride != 0 {
            return fail("crop_size must be divisible by the model stride");
        }
        if !(self.clip_norm > 0.0) {
            return fail("clip_norm must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be finite and non-negative");
        }
        Ok(())
    }

    /// Learning rate for 0-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::OneCycle => {
                let total = self.total_steps.max(1) as f64;
                let warm = (WARMUP_FRACTION * total).max(1.0);
                let t = step as f64;
                if t < warm {
                    let start = self.learning_rate / WARMUP_START_DIV;
                    start + (self.learning_rate - start) * t / warm
                } else {
                    let rest = (total - warm).max(1.0);
                    self.learning_rate * (1.0 - (t - warm) / rest).max(0.0)
                }
            }
        }
    }
}
