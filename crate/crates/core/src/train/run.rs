use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_gradient, step, Executor, Optimizer, StepMetrics, TrainConfig, TrainSample};
use crate::error::{Error, TensorError};
use crate::flow::{FlowStats, LabeledPair, PairErrors};
use crate::losses::LossConfig;
use crate::model::{predict, ModelConfig, Params};

/// Hooks called by [`train`].
pub trait TrainObserver {
    fn on_step(&mut self, _metrics: &StepMetrics) -> Result<(), Error> {
        Ok(())
    }

    /// Called after every `checkpoint_every`-th step with the current
    /// parameters.
    fn on_checkpoint(&mut self, _step: usize, _params: &Params<f32>) -> Result<(), Error> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Epoch-wise shuffled batches with random crop positions.
pub struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), order: (0..len).collect(), pos: len }
    }

    pub fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    pub fn next_batch(&mut self, data: &[&LabeledPair], cfg: &TrainConfig) -> Result<Vec<TrainSample>, Error> {
        let mut out = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let pair = data[self.next_index()];
            let (w, h) = (pair.width(), pair.height());
            let size = cfg.crop_size;
            if size == 0 || (size == w && size == h) {
                out.push(TrainSample::full(pair));
                continue;
            }
            if size > w || size > h {
                return Err(Error::Config(alloc::format!("crop {size} larger than {w}x{h} pair")));
            }
            let x0 = self.rng.random_range(0..=w - size);
            let y0 = self.rng.random_range(0..=h - size);
            out.push(TrainSample::crop(pair, x0, y0, size));
        }
        Ok(out)
    }
}

/// Runs `cfg.total_steps` optimizer steps over `data`, starting from
/// `params`.
#[allow(clippy::too_many_arguments)]
pub fn train<E: Executor, O: TrainObserver + ?Sized>(
    exec: &E,
    model: &ModelConfig,
    params: &mut Params<f32>,
    data: &[&LabeledPair],
    loss: &LossConfig,
    cfg: &TrainConfig,
    phase: &str,
    checkpoint_every: usize,
    observer: &mut O,
) -> Result<(), Error> {
    cfg.validate(model.stride)?;
    loss.validate()?;
    if cfg.total_steps == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::Data(alloc::format!("{phase}: no training pairs")));
    }
    let mut sampler = BatchSampler::new(data.len(), cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, params);
    for i in 0..cfg.total_steps {
        let batch = sampler.next_batch(data, cfg)?;
        let metrics = step(exec, model, params, &mut opt, &batch, loss, cfg, phase, i)?;
        observer.on_step(&metrics)?;
        if checkpoint_every > 0 && (i + 1) % checkpoint_every == 0 {
            observer.on_checkpoint(i + 1, params)?;
        }
    }
    Ok(())
}

/// Per-pair and pooled errors of a model on labeled pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_pair: Vec<PairErrors>,
    pub stats: FlowStats,
}

impl Evaluation {
    pub fn epe(&self) -> f64 {
        self.stats.epe().unwrap_or(f64::NAN)
    }

    pub fn f1_all(&self) -> f64 {
        self.stats.f1_all().unwrap_or(f64::NAN)
    }
}

pub fn evaluate<E: Executor>(
    exec: &E,
    model: &ModelConfig,
    params: &Params<f32>,
    pairs: &[&LabeledPair],
) -> Result<Evaluation, Error> {
    let indexed: Vec<(usize, &LabeledPair)> = pairs.iter().copied().enumerate().collect();
    let results = exec.map(&indexed, &|&(i, p)| {
        let pred = predict(model, params, &p.image1, &p.image2).map_err(|e| match e {
            Error::Tensor(source) => Error::Inference { pair: i, source },
            other => other,
        })?;
        pred.check_finite().map_err(|_| Error::Inference { pair: i, source: TensorError::NonFinite { op: "predict" } })?;
        Ok::<_, Error>(PairErrors::measure(&pred, &p.flow, &p.mask)?)
    });
    let mut out = Evaluation { per_pair: Vec::with_capacity(pairs.len()), stats: FlowStats::default() };
    for r in results {
        let e = r?;
        out.stats.push(&e)?;
        out.per_pair.push(e);
    }
    Ok(out)
}

/// Mean total loss over fixed full-frame samples, without updating anything.
pub fn probe_loss<E: Executor>(
    exec: &E,
    model: &ModelConfig,
    params: &Params<f32>,
    pairs: &[&LabeledPair],
    loss: &LossConfig,
) -> Result<f64, Error> {
    let samples: Vec<TrainSample> = pairs.iter().map(|p| TrainSample::full(p)).collect();
    let losses = exec.map(&samples, &|s| sample_gradient(model, params, s, loss).map(|g| g.loss));
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len().max(1) as f64)
}
