//! End-point error and the KITTI outlier rate.
//!
//! A pixel is an F1-all outlier when its end-point error exceeds both 3 px
//! and 5% of the ground-truth magnitude.

use num_traits::Float;

use super::{FlowField, ValidityMask};
use crate::error::FlowError;

pub const OUTLIER_ABS_PX: f64 = 3.0;
pub const OUTLIER_REL: f64 = 0.05;

fn check(pred: &FlowField, gt: &FlowField, mask: &ValidityMask) -> Result<(), FlowError> {
    for (w, h) in [(gt.width, gt.height), (mask.width, mask.height)] {
        if (w, h) != (pred.width, pred.height) {
            return Err(FlowError::DimensionMismatch(pred.width, pred.height, w, h));
        }
    }
    Ok(())
}

/// Per-pair error totals, pooled across a dataset by [`FlowStats`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairErrors {
    pub epe_sum: f64,
    pub outliers: usize,
    pub valid: usize,
}

impl PairErrors {
    pub fn measure(pred: &FlowField, gt: &FlowField, mask: &ValidityMask) -> Result<Self, FlowError> {
        check(pred, gt, mask)?;
        let mut out = PairErrors::default();
        for y in 0..pred.height {
            for x in 0..pred.width {
                if !mask.get(x, y) {
                    continue;
                }
                let (pu, pv) = pred.get(x, y);
                let (gu, gv) = gt.get(x, y);
                let (du, dv) = (pu as f64 - gu as f64, pv as f64 - gv as f64);
                let err = Float::sqrt(du * du + dv * dv);
                let mag = Float::hypot(gu as f64, gv as f64);
                out.epe_sum += err;
                out.valid += 1;
                if err > OUTLIER_ABS_PX && err > OUTLIER_REL * mag {
                    out.outliers += 1;
                }
            }
        }
        Ok(out)
    }

    pub fn epe(&self) -> Result<f64, FlowError> {
        if self.valid == 0 {
            return Err(FlowError::EmptyMask);
        }
        Ok(self.epe_sum / self.valid as f64)
    }

    pub fn f1_all(&self) -> Result<f64, FlowError> {
        if self.valid == 0 {
            return Err(FlowError::EmptyMask);
        }
        Ok(100.0 * self.outliers as f64 / self.valid as f64)
    }
}

/// Mean end-point error over valid pixels, in pixels.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: &ValidityMask) -> Result<f64, FlowError> {
    PairErrors::measure(pred, gt, mask)?.epe()
}

/// Percentage of valid pixels that are outliers.
pub fn f1_all(pred: &FlowField, gt: &FlowField, mask: &ValidityMask) -> Result<f64, FlowError> {
    PairErrors::measure(pred, gt, mask)?.f1_all()
}

/// Dataset-level accumulator: EPE is the mean of per-pair EPEs, F1-all is
/// pooled over every valid pixel of every pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowStats {
    epe_total: f64,
    pairs: usize,
    outliers: usize,
    valid: usize,
}

impl FlowStats {
    pub fn push(&mut self, e: &PairErrors) -> Result<(), FlowError> {
        self.epe_total += e.epe()?;
        self.pairs += 1;
        self.outliers += e.outliers;
        self.valid += e.valid;
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn epe(&self) -> Result<f64, FlowError> {
        if self.pairs == 0 {
            return Err(FlowError::EmptyMask);
        }
        Ok(self.epe_total / self.pairs as f64)
    }

    pub fn f1_all(&self) -> Result<f64, FlowError> {
        if self.valid == 0 {
            return Err(FlowError::EmptyMask);
        }
        Ok(100.0 * self.outliers as f64 / self.valid as f64)
    }
}
