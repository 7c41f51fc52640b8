use alloc::string::String;
use alloc::vec::Vec;

use super::{train, Executor, TrainConfig, TrainObserver};
use crate::error::Error;
use crate::flow::LabeledPair;
use crate::losses::LossConfig;
use crate::model::{init_params, Checkpoint, CheckpointMeta, ModelConfig};

/// Which additions to the baseline network a pretrained model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    /// Sequence loss only, RGB input.
    Baseline,
    /// Coordinate channels, sequence loss only.
    Coord,
    /// Coordinate channels and the contrastive term.
    CoordContrastive,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Coord, Variant::CoordContrastive];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Coord => "coord",
            Variant::CoordContrastive => "coord-contrastive",
        }
    }

    pub fn model(self, base: &ModelConfig) -> ModelConfig {
        ModelConfig { coord_encoding: self != Variant::Baseline, ..*base }
    }

    pub fn loss(self, base: &LossConfig) -> LossConfig {
        let weight = if self == Variant::CoordContrastive { base.contrastive_weight } else { 0.0 };
        LossConfig { contrastive_weight: weight, ..*base }
    }
}

/// Trains one variant from a fresh initialization drawn from `init_seed`.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_variant<E: Executor, O: TrainObserver + ?Sized>(
    exec: &E,
    variant: Variant,
    base_model: &ModelConfig,
    base_loss: &LossConfig,
    data: &[&LabeledPair],
    cfg: &TrainConfig,
    init_seed: u64,
    observer: &mut O,
) -> Result<Checkpoint, Error> {
    let model = variant.model(base_model);
    let loss = variant.loss(base_loss);
    let mut params = init_params(&model, init_seed);
    let phase: String = alloc::format!("pretrain/{}", variant.name());
    train(exec, &model, &mut params, data, &loss, cfg, &phase, 0, observer)?;
    Ok(Checkpoint {
        meta: CheckpointMeta {
            model,
            contrastive_weight: loss.contrastive_weight as f32,
            step: cfg.total_steps as u64,
            tag: phase,
        },
        params,
    })
}

/// The baseline and the full variant, trained with the same data order and
/// initialization seed.
pub fn pretrain<E: Executor, O: TrainObserver + ?Sized>(
    exec: &E,
    base_model: &ModelConfig,
    base_loss: &LossConfig,
    data: &[&LabeledPair],
    cfg: &TrainConfig,
    init_seed: u64,
    observer: &mut O,
) -> Result<(Checkpoint, Checkpoint), Error> {
    let mut out: Vec<Checkpoint> = Vec::with_capacity(2);
    for v in [Variant::Baseline, Variant::CoordContrastive] {
        out.push(pretrain_variant(exec, v, base_model, base_loss, data, cfg, init_seed, observer)?);
    }
    let ours = out.pop().expect("two variants");
    let bs = out.pop().expect("two variants");
    Ok((bs, ours))
}
