use alloc::string::String;
use alloc::vec::Vec;

use super::{generate_pseudo_labels, kfold_cv, CvReport, SslConfig};
use crate::error::Error;
use crate::flow::{FramePair, LabeledPair};
use crate::losses::LossConfig;
use crate::model::{Checkpoint, CheckpointMeta, Params};
use crate::seed::sub_seed;
use crate::train::{evaluate, train, Evaluation, Executor, StepMetrics, TrainConfig, TrainObserver};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SslPhase {
    PseudoLabels,
    Unlabeled,
    CrossValidation,
    Finetune,
    Evaluate,
}

impl SslPhase {
    pub fn name(self) -> &'static str {
        match self {
            SslPhase::PseudoLabels => "pseudo-labels",
            SslPhase::Unlabeled => "unlabeled",
            SslPhase::CrossValidation => "cv",
            SslPhase::Finetune => "finetune",
            SslPhase::Evaluate => "evaluate",
        }
    }
}

/// Everything the loop reads.
pub struct SslInputs<'a> {
    /// First master.
    pub baseline: &'a Checkpoint,
    /// Every student starts from these weights.
    pub student_init: &'a Checkpoint,
    pub unlabeled: &'a [FramePair],
    /// Small labeled target set for cross validation and finetuning.
    pub labeled: &'a [LabeledPair],
    pub test: &'a [LabeledPair],
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationReport {
    pub iteration: usize,
    /// Share of pseudo-label pixels kept by the mask.
    pub pseudo_valid_fraction: f64,
    pub finetune_steps: usize,
    /// Mean held-out F1-all of cross validation at the chosen step.
    pub val_f1: f64,
    /// Finetuned student on the labeled target set it was finetuned on.
    pub train_epe: f64,
    pub train_f1: f64,
    pub test_epe: f64,
    pub test_f1: f64,
    /// The stopping rule fired after this iteration.
    pub stop: bool,
}

/// Loop state after `iteration` completed iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct SslState {
    pub iteration: usize,
    pub master: Checkpoint,
    pub student_init: Checkpoint,
    /// Finetuned student of the last completed iteration.
    pub student: Option<Checkpoint>,
    pub finetune_steps: Option<usize>,
    pub history: Vec<IterationReport>,
    pub stopped: bool,
}

impl SslState {
    pub fn new(baseline: &Checkpoint, student_init: &Checkpoint) -> Self {
        Self {
            iteration: 0,
            master: baseline.clone(),
            student_init: student_init.clone(),
            student: None,
            finetune_steps: None,
            history: Vec::new(),
            stopped: false,
        }
    }
}

/// Progress callbacks; every default does nothing.
pub trait SslHooks {
    fn on_phase(&mut self, _iteration: usize, _phase: SslPhase) -> Result<(), Error> {
        Ok(())
    }

    fn on_pseudo_labels(&mut self, _iteration: usize, _labels: &[LabeledPair]) -> Result<(), Error> {
        Ok(())
    }

    fn on_step(&mut self, _iteration: usize, _metrics: &StepMetrics) -> Result<(), Error> {
        Ok(())
    }

    /// A retained checkpoint of training on pseudo labels.
    fn on_unlabeled_checkpoint(&mut self, _iteration: usize, _ckpt: &Checkpoint) -> Result<(), Error> {
        Ok(())
    }

    fn on_cv(&mut self, _iteration: usize, _report: &CvReport) -> Result<(), Error> {
        Ok(())
    }

    /// Called once an iteration is complete, before the next starts.
    fn on_iteration(&mut self, _state: &SslState) -> Result<(), Error> {
        Ok(())
    }
}

pub struct NoHooks;

impl SslHooks for NoHooks {}

fn checkpoint(base: &CheckpointMeta, params: Params<f32>, step: usize, tag: String) -> Checkpoint {
    Checkpoint { meta: CheckpointMeta { step: step as u64, tag, ..base.clone() }, params }
}

fn student_loss(loss: &LossConfig, init: &Checkpoint, contrastive: bool) -> LossConfig {
    let weight = if contrastive { init.meta.contrastive_weight as f64 } else { 0.0 };
    LossConfig { contrastive_weight: weight, ..*loss }
}

struct Relay<'a, H: SslHooks + ?Sized> {
    hooks: &'a mut H,
    iteration: usize,
    base: &'a CheckpointMeta,
    tag: &'a str,
}

impl<H: SslHooks + ?Sized> TrainObserver for Relay<'_, H> {
    fn on_step(&mut self, m: &StepMetrics) -> Result<(), Error> {
        self.hooks.on_step(self.iteration, m)
    }

    fn on_checkpoint(&mut self, step: usize, params: &Params<f32>) -> Result<(), Error> {
        let c = checkpoint(self.base, params.clone(), step, alloc::format!("{}@{step}", self.tag));
        self.hooks.on_unlabeled_checkpoint(self.iteration, &c)
    }
}

/// `steps` optimizer steps of `init` on pseudo-labeled pairs, with a
/// checkpoint handed to the observer every `interval` steps.
#[allow(clippy::too_many_arguments)]
pub fn train_unlabeled<E: Executor, O: TrainObserver + ?Sized>(
    exec: &E,
    init: &Checkpoint,
    pseudo: &[LabeledPair],
    steps: usize,
    interval: usize,
    cfg: &TrainConfig,
    loss: &LossConfig,
    phase: &str,
    observer: &mut O,
) -> Result<Params<f32>, Error> {
    if steps > 0 && pseudo.is_empty() {
        return Err(Error::Data("no pseudo-labeled pairs".into()));
    }
    let data: Vec<&LabeledPair> = pseudo.iter().collect();
    let mut params = init.params.clone();
    let cfg = TrainConfig { total_steps: steps, ..*cfg };
    train(exec, &init.meta.model, &mut params, &data, loss, &cfg, phase, interval, observer)?;
    Ok(params)
}

/// Exactly `steps` optimizer steps on the labeled target pairs.
#[allow(clippy::too_many_arguments)]
pub fn finetune<E: Executor, O: TrainObserver + ?Sized>(
    exec: &E,
    student: &Checkpoint,
    labeled: &[LabeledPair],
    steps: usize,
    cfg: &TrainConfig,
    loss: &LossConfig,
    phase: &str,
    observer: &mut O,
) -> Result<Params<f32>, Error> {
    let data: Vec<&LabeledPair> = labeled.iter().collect();
    let mut params = student.params.clone();
    let cfg = TrainConfig { total_steps: steps, ..*cfg };
    train(exec, &student.meta.model, &mut params, &data, loss, &cfg, phase, 0, observer)?;
    Ok(params)
}

fn eval_on<E: Executor>(exec: &E, c: &Checkpoint, pairs: &[LabeledPair]) -> Result<Evaluation, Error> {
    let refs: Vec<&LabeledPair> = pairs.iter().collect();
    evaluate(exec, &c.meta.model, &c.params, &refs)
}

/// Runs pseudo-labeling iterations until `cfg.iterations` are done or the
/// stopping rule fires. `resume` continues from a saved state.
pub fn run<E: Executor, H: SslHooks + ?Sized>(
    exec: &E,
    inputs: &SslInputs<'_>,
    cfg: &SslConfig,
    loss: &LossConfig,
    hooks: &mut H,
    resume: Option<SslState>,
) -> Result<SslState, Error> {
    let model = inputs.student_init.meta.model;
    cfg.validate(model.stride)?;
    loss.validate()?;
    if inputs.unlabeled.is_empty() || inputs.test.is_empty() {
        return Err(Error::Data("unlabeled and test sets must be non-empty".into()));
    }
    let mut state = match resume {
        Some(s) if s.student_init != *inputs.student_init => {
            return Err(Error::Config("resume state was started from different student weights".into()))
        }
        Some(s) => s,
        None => SslState::new(inputs.baseline, inputs.student_init),
    };
    let init = inputs.student_init;
    let unlabeled_loss = student_loss(loss, init, cfg.contrastive_unlabeled);
    let finetune_loss = student_loss(loss, init, cfg.contrastive_finetune);

    while state.iteration < cfg.iterations && !state.stopped {
        let i = state.iteration + 1;
        let seed = |name: &str| sub_seed(cfg.seed, &alloc::format!("iter{i}/{name}"));

        hooks.on_phase(i, SslPhase::PseudoLabels)?;
        let pseudo = generate_pseudo_labels(exec, &state.master, inputs.unlabeled, cfg.consistency_filter)?;
        let kept: usize = pseudo.iter().map(|p| p.mask.count()).sum();
        let total: usize = pseudo.iter().map(|p| p.width() * p.height()).sum();
        hooks.on_pseudo_labels(i, &pseudo)?;

        hooks.on_phase(i, SslPhase::Unlabeled)?;
        let tag = alloc::format!("iter{i}/unlabeled");
        let train_cfg = TrainConfig { seed: seed("unlabeled"), ..cfg.unlabeled };
        let mut relay = Relay { hooks: &mut *hooks, iteration: i, base: &init.meta, tag: &tag };
        let updated = train_unlabeled(
            exec,
            init,
            &pseudo,
            cfg.unlabeled_steps,
            cfg.eval_interval,
            &train_cfg,
            &unlabeled_loss,
            &tag,
            &mut relay,
        )?;
        drop(pseudo);
        let updated = checkpoint(&init.meta, updated, cfg.unlabeled_steps, tag);

        hooks.on_phase(i, SslPhase::CrossValidation)?;
        let cv_phase = alloc::format!("iter{i}/cv");
        let (report, curves) = kfold_cv(
            exec,
            &model,
            &updated.params,
            inputs.labeled,
            &finetune_loss,
            &cfg.finetune,
            cfg.folds,
            cfg.eval_interval,
            cfg.finetune_cap,
            &cv_phase,
            &|j| seed(&alloc::format!("cv/fold{j}")),
        )?;
        for c in &curves {
            for m in &c.log {
                hooks.on_step(i, m)?;
            }
        }
        hooks.on_cv(i, &report)?;

        hooks.on_phase(i, SslPhase::Finetune)?;
        let ft_tag = alloc::format!("iter{i}/finetune");
        let ft_cfg = TrainConfig { seed: seed("finetune"), ..cfg.finetune };
        let mut relay = Relay { hooks: &mut *hooks, iteration: i, base: &init.meta, tag: &ft_tag };
        let tuned =
            finetune(exec, &updated, inputs.labeled, report.best_step, &ft_cfg, &finetune_loss, &ft_tag, &mut relay)?;
        let tuned = checkpoint(&init.meta, tuned, report.best_step, alloc::format!("iter{i}/final"));

        hooks.on_phase(i, SslPhase::Evaluate)?;
        let test = eval_on(exec, &tuned, inputs.test)?;
        let train_eval = eval_on(exec, &tuned, inputs.labeled)?;
        let test_f1 = test.stats.f1_all()?;
        let stop = match state.history.last() {
            Some(prev) => prev.test_f1 - test_f1 < cfg.stop_epsilon,
            None => false,
        };
        state.history.push(IterationReport {
            iteration: i,
            pseudo_valid_fraction: kept as f64 / total.max(1) as f64,
            finetune_steps: report.best_step,
            val_f1: report.best_mean(),
            train_epe: train_eval.stats.epe()?,
            train_f1: train_eval.stats.f1_all()?,
            test_epe: test.stats.epe()?,
            test_f1,
            stop,
        });
        state.iteration = i;
        state.master = tuned.clone();
        state.student = Some(tuned);
        state.finetune_steps = Some(report.best_step);
        state.stopped = stop;
        hooks.on_iteration(&state)?;
    }
    Ok(state)
}
