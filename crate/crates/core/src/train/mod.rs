//! The optimization loop shared by every training phase.
//!
//! A step draws a batch, runs one tape per sample through the [`Executor`],
//! sums the per-sample gradients in sample order, clips the global norm and
//! applies the optimizer. Because the reduction order never depends on the
//! executor, a multi-threaded run produces the same bits as a sequential one.

mod config;
mod exec;
mod optim;
mod pretrain;
mod run;
mod step;

pub use config::{OptimizerKind, Schedule, TrainConfig};
pub use exec::{Executor, Sequential};
pub use optim::{clip_global_norm, global_norm, Optimizer};
pub use pretrain::{pretrain, pretrain_variant, Variant};
pub use run::{evaluate, probe_loss, train, BatchSampler, Evaluation, NoObserver, TrainObserver};
pub use step::{sample_gradient, step, SampleGradient, StepMetrics, TrainSample};
