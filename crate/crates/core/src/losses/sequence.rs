use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, FlowError};
use crate::flow::{FlowField, ValidityMask};
use crate::real::Real;
use crate::tape::{CustomOp, Grads, Tape, Var};
use crate::tensor::Tensor;

struct MaskedL1<T> {
    x: Var,
    /// `sign(pred - target) / N_v` at valid entries, 0 elsewhere.
    dir: Vec<T>,
}

impl<T: Real> CustomOp<T> for MaskedL1<T> {
    fn name(&self) -> &'static str {
        "masked_l1"
    }

    fn backward(&self, _out: &Tensor<T>, g: &[T], grads: &mut Grads<'_, T>) {
        if let Some(s) = grads.slot(self.x) {
            for (s, &d) in s.iter_mut().zip(&self.dir) {
                *s += g[0] * d;
            }
        }
    }
}

/// Mean over valid pixels of `|du| + |dv|` between `pred: [2, H, W]` and
/// `target`.
pub fn masked_l1<T: Real>(tape: &mut Tape<T>, pred: Var, target: &FlowField, mask: &ValidityMask) -> Result<Var, Error> {
    let (w, h) = (target.width, target.height);
    if tape.shape(pred) != [2, h, w] || (mask.width, mask.height) != (w, h) {
        let s = tape.shape(pred);
        return Err(FlowError::DimensionMismatch(w, h, s.get(2).copied().unwrap_or(0), s.get(1).copied().unwrap_or(0)).into());
    }
    let nv = mask.count();
    if nv == 0 {
        return Err(FlowError::EmptyMask.into());
    }
    let inv = T::from_f64(1.0 / nv as f64);
    let n = w * h;
    let p = tape.value(pred).data();
    let mut total = T::zero();
    let mut dir = alloc::vec![T::zero(); 2 * n];
    for i in 0..2 * n {
        if !mask.data[i % n] {
            continue;
        }
        let d = p[i] - T::from_f64(target.data[i] as f64);
        total += d.abs();
        dir[i] = if d > T::zero() {
            inv
        } else if d < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    let value = Tensor::scalar(total * inv);
    Ok(tape.custom(value, &[pred], Box::new(MaskedL1 { x: pred, dir }))?)
}

/// `sum_t gamma^(T-t) * masked_l1(f_t)` over the estimates `f_1..f_T`.
pub fn sequence_loss<T: Real>(
    tape: &mut Tape<T>,
    flows: &[Var],
    target: &FlowField,
    mask: &ValidityMask,
    gamma: f64,
) -> Result<Var, Error> {
    if flows.is_empty() {
        return Err(Error::Config("sequence loss of an empty flow sequence".into()));
    }
    let t = flows.len();
    let mut total: Option<Var> = None;
    for (k, &f) in flows.iter().enumerate() {
        let mut term = masked_l1(tape, f, target, mask)?;
        let weight = num_traits::Float::powi(gamma, (t - 1 - k) as i32);
        if weight != 1.0 {
            term = tape.scale(term, T::from_f64(weight))?;
        }
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.expect("non-empty"))
}
