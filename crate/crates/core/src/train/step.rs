use alloc::string::String;
use alloc::vec::Vec;

use super::{clip_global_norm, Executor, Optimizer, TrainConfig};
use crate::error::Error;
use crate::flow::{FlowField, Image, LabeledPair, ValidityMask};
use crate::losses::{total_loss, LossConfig};
use crate::model::{forward, prepare_input, ModelConfig, Params};
use crate::tape::{Tape, Var};

/// One (possibly cropped) training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub image1: Image,
    pub image2: Image,
    pub flow: FlowField,
    pub mask: ValidityMask,
}

impl TrainSample {
    pub fn full(pair: &LabeledPair) -> Self {
        Self { image1: pair.image1.clone(), image2: pair.image2.clone(), flow: pair.flow.clone(), mask: pair.mask.clone() }
    }

    pub fn crop(pair: &LabeledPair, x0: usize, y0: usize, size: usize) -> Self {
        Self {
            image1: pair.image1.crop(x0, y0, size, size),
            image2: pair.image2.crop(x0, y0, size, size),
            flow: pair.flow.crop(x0, y0, size, size),
            mask: pair.mask.crop(x0, y0, size, size),
        }
    }
}

/// Loss terms and parameter gradients of one sample.
#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    pub sequence: f64,
    pub contrastive: Option<f64>,
    pub grads: Vec<Vec<f32>>,
}

pub fn sample_gradient(
    model: &ModelConfig,
    params: &Params<f32>,
    sample: &TrainSample,
    loss: &LossConfig,
) -> Result<SampleGradient, Error> {
    let mut tape = Tape::<f32>::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.param(t.clone())).collect();
    let a = tape.constant(prepare_input(model, &sample.image1)?);
    let b = tape.constant(prepare_input(model, &sample.image2)?);
    let out = forward(&mut tape, model, &vars, a, b)?;
    let terms = total_loss(&mut tape, &out.flows, &sample.flow, &sample.mask, out.features, model.stride, loss)?;
    tape.backward(terms.total)?;
    let scalar = |v: Var| tape.value(v).data()[0] as f64;
    let grads = vars
        .iter()
        .zip(&params.tensors)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| alloc::vec![0.0; t.numel()], <[f32]>::to_vec))
        .collect();
    Ok(SampleGradient {
        loss: scalar(terms.total),
        sequence: scalar(terms.sequence),
        contrastive: terms.contrastive.map(scalar),
        grads,
    })
}

/// What one optimization step reports.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepMetrics {
    pub phase: String,
    /// 1-based index of the completed step.
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub sequence: f64,
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none"))]
    pub contrastive: Option<f64>,
    /// Norm of the batch-mean gradient before clipping.
    pub grad_norm: f64,
}

/// One forward/backward/update over `batch`. Losses and gradients are
/// averaged over the batch.
pub fn step<E: Executor>(
    exec: &E,
    model: &ModelConfig,
    params: &mut Params<f32>,
    opt: &mut Optimizer,
    batch: &[TrainSample],
    loss: &LossConfig,
    train: &TrainConfig,
    phase: &str,
    index: usize,
) -> Result<StepMetrics, Error> {
    let diverged = || Error::Divergence { phase: phase.into(), step: index + 1 };
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let shared: &Params<f32> = params;
    let results = exec.map(batch, &|s| sample_gradient(model, shared, s, loss));
    let n = batch.len() as f64;
    let (mut total, mut seq, mut ct) = (0.0, 0.0, None::<f64>);
    let mut grads: Option<Vec<Vec<f32>>> = None;
    for r in results {
        let r = r.map_err(|e| match e {
            Error::Tensor(crate::TensorError::NonFinite { .. }) => diverged(),
            other => other,
        })?;
        total += r.loss;
        seq += r.sequence;
        if let Some(c) = r.contrastive {
            *ct.get_or_insert(0.0) += c;
        }
        match grads.as_mut() {
            None => grads = Some(r.grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut grads = grads.expect("non-empty batch");
    let inv = (1.0 / n) as f32;
    grads.iter_mut().flatten().for_each(|g| *g *= inv);
    let norm = clip_global_norm(&mut grads, train.clip_norm);
    if !(total.is_finite() && norm.is_finite()) {
        return Err(diverged());
    }
    let lr = train.lr_at(index);
    opt.apply(params, &grads, lr, train);
    if !params.is_finite() {
        return Err(diverged());
    }
    Ok(StepMetrics {
        phase: phase.into(),
        step: index + 1,
        lr,
        loss: total / n,
        sequence: seq / n,
        contrastive: ct.map(|c| c / n),
        grad_norm: norm,
    })
}
