use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::flow::LabeledPair;
use crate::losses::LossConfig;
use crate::model::{ModelConfig, Params};
use crate::train::{evaluate, train, Executor, Sequential, StepMetrics, TrainConfig, TrainObserver};

/// Which labeled pairs a fold trains on and which it holds out.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldSpec {
    pub index: usize,
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

/// Contiguous folds of `n / k` pairs; the last fold absorbs the remainder.
pub fn fold_partition(n: usize, k: usize) -> Result<Vec<FoldSpec>, Error> {
    if k < 2 {
        return Err(Error::Config("cross validation needs at least 2 folds".into()));
    }
    if n < k {
        return Err(Error::Data(alloc::format!("{n} labeled pairs cannot fill {k} folds")));
    }
    let size = n / k;
    Ok((0..k)
        .map(|j| {
            let lo = j * size;
            let hi = if j + 1 == k { n } else { lo + size };
            FoldSpec { index: j, train: (0..lo).chain(hi..n).collect(), held_out: (lo..hi).collect() }
        })
        .collect())
}

/// `0, interval, 2 * interval, ...` up to and including `cap`.
pub fn eval_steps(interval: usize, cap: usize) -> Vec<usize> {
    (0..=cap / interval.max(1)).map(|i| i * interval).collect()
}

/// Held-out F1-all of one fold at every evaluated step, plus the training
/// log that produced it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldCurve {
    pub f1: Vec<f64>,
    pub log: Vec<StepMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvReport {
    pub steps: Vec<usize>,
    /// `curves[fold][i]` is the held-out F1-all after `steps[i]` steps.
    pub curves: Vec<Vec<f64>>,
    /// Arithmetic mean over folds at each step.
    pub mean: Vec<f64>,
    /// The chosen finetuning length.
    pub best_step: usize,
    pub folds: Vec<FoldSpec>,
}

impl CvReport {
    /// Averages the fold curves and picks the step of the smallest mean,
    /// preferring the earliest step on ties.
    pub fn from_curves(steps: Vec<usize>, folds: Vec<FoldSpec>, curves: Vec<Vec<f64>>) -> Result<Self, Error> {
        if steps.is_empty() || curves.is_empty() || curves.len() != folds.len() {
            return Err(Error::Data("cross validation produced no curves".into()));
        }
        if curves.iter().any(|c| c.len() != steps.len()) {
            return Err(Error::Data("fold curve length differs from the step grid".into()));
        }
        let k = curves.len() as f64;
        let mean: Vec<f64> = (0..steps.len()).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / k).collect();
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Data("non-finite cross-validation score".into()));
        }
        let mut best = 0;
        for (i, &m) in mean.iter().enumerate() {
            if m < mean[best] {
                best = i;
            }
        }
        Ok(Self { best_step: steps[best], steps, curves, mean, folds })
    }

    /// Mean held-out F1-all at the chosen step.
    pub fn best_mean(&self) -> f64 {
        let i = self.steps.iter().position(|&s| s == self.best_step).expect("best step on the grid");
        self.mean[i]
    }
}

/// Cross validation with a caller-supplied per-fold curve. `fold_curve`
/// receives the fold and the step grid and returns one score per step.
pub fn kfold_cv_with<E, F>(exec: &E, n: usize, k: usize, interval: usize, cap: usize, fold_curve: F) -> Result<(CvReport, Vec<FoldCurve>), Error>
where
    E: Executor,
    F: Fn(&FoldSpec, &[usize]) -> Result<FoldCurve, Error> + Sync,
{
    let folds = fold_partition(n, k)?;
    let steps = eval_steps(interval, cap);
    let results = exec.map(&folds, &|f| fold_curve(f, &steps));
    let mut curves = Vec::with_capacity(k);
    let mut logs = Vec::with_capacity(k);
    for r in results {
        let c = r?;
        if c.f1.len() != steps.len() {
            return Err(Error::Data("fold curve length differs from the step grid".into()));
        }
        curves.push(c.f1.clone());
        logs.push(c);
    }
    Ok((CvReport::from_curves(steps, folds, curves)?, logs))
}

struct HeldOut<'a> {
    model: &'a ModelConfig,
    pairs: Vec<&'a LabeledPair>,
    f1: Vec<f64>,
    log: Vec<StepMetrics>,
}

impl HeldOut<'_> {
    fn score(&mut self, params: &Params<f32>) -> Result<(), Error> {
        let e = evaluate(&Sequential, self.model, params, &self.pairs)?;
        self.f1.push(e.stats.f1_all()?);
        Ok(())
    }
}

impl TrainObserver for HeldOut<'_> {
    fn on_step(&mut self, m: &StepMetrics) -> Result<(), Error> {
        self.log.push(m.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, _step: usize, params: &Params<f32>) -> Result<(), Error> {
        self.score(params)
    }
}

/// Every fold finetunes a copy of `params` on the other folds for up to
/// `cap` steps, scoring held-out F1-all at step 0 and every `interval`
/// steps. Fold `j` draws its batch order from `seed_of(j)`.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv<E: Executor>(
    exec: &E,
    model: &ModelConfig,
    params: &Params<f32>,
    labeled: &[LabeledPair],
    loss: &LossConfig,
    train_cfg: &TrainConfig,
    k: usize,
    interval: usize,
    cap: usize,
    phase: &str,
    seed_of: &(dyn Fn(usize) -> u64 + Sync),
) -> Result<(CvReport, Vec<FoldCurve>), Error> {
    kfold_cv_with(exec, labeled.len(), k, interval, cap, |fold, steps| {
        let mut obs = HeldOut {
            model,
            pairs: fold.held_out.iter().map(|&i| &labeled[i]).collect(),
            f1: Vec::with_capacity(steps.len()),
            log: Vec::new(),
        };
        obs.score(params)?;
        let data: Vec<&LabeledPair> = fold.train.iter().map(|&i| &labeled[i]).collect();
        let cfg = TrainConfig { total_steps: *steps.last().expect("non-empty grid"), seed: seed_of(fold.index), ..*train_cfg };
        let mut student = params.clone();
        let name: String = alloc::format!("{phase}/fold{}", fold.index);
        train(&Sequential, model, &mut student, &data, loss, &cfg, &name, interval, &mut obs)?;
        Ok(FoldCurve { f1: obs.f1, log: obs.log })
    })
}
