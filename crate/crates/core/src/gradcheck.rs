//! Central finite-difference verification of recorded gradients.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::TensorError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which coordinates of each input are perturbed.
#[derive(Clone, Copy, Debug)]
pub enum Coverage {
    All,
    /// At most `per_input` distinct coordinates per input, drawn from `seed`.
    Sample { per_input: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(1, |analytic|)` over checked coordinates.
    pub max_rel_error: f64,
    /// `(input, coordinate)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Gradient check of a scalar function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var, TensorError>,
{
    let report = grad_check_inputs(
        |tape, vars| f(tape, vars[0]),
        core::slice::from_ref(x),
        eps,
        Coverage::All,
    )?;
    Ok(report.max_rel_error)
}

/// Gradient check of a scalar function of several tensors.
pub fn grad_check_inputs<F>(
    f: F,
    inputs: &[Tensor<f64>],
    eps: f64,
    coverage: Coverage,
) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| alloc::vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut report = GradCheck { max_rel_error: 0.0, worst: None, checked: 0 };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in coordinates(input.numel(), k, coverage) {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(TensorError::NonFinite { op: "grad_check" });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[k][i];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((k, i));
            }
        }
    }
    Ok(report)
}

fn coordinates(n: usize, input: usize, coverage: Coverage) -> Vec<usize> {
    match coverage {
        Coverage::All => (0..n).collect(),
        Coverage::Sample { per_input, seed } if per_input < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (input as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            // partial Fisher-Yates
            let mut idx: Vec<usize> = (0..n).collect();
            for j in 0..per_input {
                let r = j + (rng.next_u64() % (n - j) as u64) as usize;
                idx.swap(j, r);
            }
            idx.truncate(per_input);
            idx.sort_unstable();
            idx
        }
        Coverage::Sample { .. } => (0..n).collect(),
    }
}
