//! Supervised sequence loss, contrastive flow loss, and their sum.

mod contrastive;
mod sequence;

pub use contrastive::{contrastive_flow_loss, contrastive_queries, Query};
pub use sequence::{masked_l1, sequence_loss};

use crate::error::Error;
use crate::flow::{FlowField, ValidityMask};
use crate::real::Real;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossConfig {
    /// Softmax temperature of the contrastive term.
    pub temperature: f64,
    /// Per-step decay of the sequence loss; the last step has weight 1.
    pub gamma: f64,
    /// Weight of the contrastive term; 0 disables it.
    pub contrastive_weight: f64,
    /// Cap on contrastive queries per pair, 0 for all of them.
    pub max_queries: usize,
    /// L2-normalize features before the contrastive similarity.
    pub normalize_features: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.07, gamma: 0.8, contrastive_weight: 0.1, max_queries: 0, normalize_features: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("loss: temperature must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("loss: gamma must be in (0, 1]".into()));
        }
        if !(self.contrastive_weight >= 0.0 && self.contrastive_weight.is_finite()) {
            return Err(Error::Config("loss: contrastive_weight must be non-negative".into()));
        }
        Ok(())
    }
}

pub struct LossTerms {
    pub total: Var,
    pub sequence: Var,
    pub contrastive: Option<Var>,
}

/// `sequence + weight * contrastive`, with the label flow also serving as
/// the warp of the contrastive term. The contrastive term is skipped when
/// its weight is 0.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    flows: &[Var],
    target: &FlowField,
    mask: &ValidityMask,
    features: (Var, Var),
    stride: usize,
    cfg: &LossConfig,
) -> Result<LossTerms, Error> {
    cfg.validate()?;
    let sequence = sequence_loss(tape, flows, target, mask, cfg.gamma)?;
    if cfg.contrastive_weight == 0.0 {
        return Ok(LossTerms { total: sequence, sequence, contrastive: None });
    }
    let ct = contrastive_flow_loss(tape, features.0, features.1, target, mask, stride, cfg)?;
    let weighted = tape.scale(ct, T::from_f64(cfg.contrastive_weight))?;
    let total = tape.add(sequence, weighted)?;
    Ok(LossTerms { total, sequence, contrastive: Some(ct) })
}

#[cfg(test)]
mod tests;
