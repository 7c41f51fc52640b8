//! Iterative pseudo labeling: a master model labels the unlabeled target
//! pairs, a student restarted from its pretrained weights learns from those
//! labels, k-fold cross validation on the small labeled target set picks a
//! finetuning length, and the finetuned student becomes the next master.

mod cv;
mod pseudo;
mod run;

pub use cv::{eval_steps, fold_partition, kfold_cv, kfold_cv_with, CvReport, FoldCurve, FoldSpec};
pub use pseudo::{consistency_mask, generate_pseudo_labels, in_frame_mask};
pub use run::{finetune, run, train_unlabeled, IterationReport, NoHooks, SslHooks, SslInputs, SslPhase, SslState};

use crate::error::Error;
use crate::train::{Schedule, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SslConfig {
    /// Maximum number of pseudo-labeling iterations.
    pub iterations: usize,
    /// Optimizer steps on the pseudo-labeled set per iteration.
    pub unlabeled_steps: usize,
    pub folds: usize,
    /// Steps between checkpoints and between held-out evaluations.
    pub eval_interval: usize,
    /// Longest finetuning run considered by cross validation.
    pub finetune_cap: usize,
    /// Stop once the test F1-all gain over the previous iteration falls
    /// below this many percentage points.
    pub stop_epsilon: f64,
    /// Drop pseudo-label pixels failing a forward-backward check.
    pub consistency_filter: bool,
    /// Add the contrastive term while training on pseudo labels.
    pub contrastive_unlabeled: bool,
    /// Add the contrastive term during cross validation and finetuning.
    pub contrastive_finetune: bool,
    /// Root of the batch-order seeds of every phase.
    pub seed: u64,
    /// Optimizer settings on pseudo labels; `total_steps` is ignored.
    pub unlabeled: TrainConfig,
    /// Optimizer settings for cross validation and finetuning;
    /// `total_steps` is ignored.
    pub finetune: TrainConfig,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            unlabeled_steps: 2000,
            folds: 5,
            eval_interval: 50,
            finetune_cap: 500,
            stop_epsilon: 0.05,
            consistency_filter: false,
            contrastive_unlabeled: true,
            contrastive_finetune: true,
            seed: 0,
            unlabeled: TrainConfig { batch_size: 1, learning_rate: 2e-4, ..TrainConfig::default() },
            finetune: TrainConfig {
                batch_size: 1,
                learning_rate: 5e-5,
                schedule: Schedule::Constant,
                ..TrainConfig::default()
            },
        }
    }
}

impl SslConfig {
    pub fn validate(&self, stride: usize) -> Result<(), Error> {
        let fail = |m: &str| Err(Error::Config(alloc::format!("ssl: {m}")));
        if self.iterations == 0 {
            return fail("iterations must be at least 1");
        }
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be at least 1");
        }
        if !(self.stop_epsilon >= 0.0) {
            return fail("stop_epsilon must be non-negative");
        }
        self.unlabeled.validate(stride)?;
        self.finetune.validate(stride)
    }
}

#[cfg(test)]
mod tests;
