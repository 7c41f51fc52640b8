use alloc::vec;

use super::{Grads, Op, Tape, Var};
use crate::error::TensorError;
use crate::real::{gemm, MatRef, Real};
use crate::tensor::Tensor;

fn dims2(op: &'static str, shape: &[usize]) -> Result<(usize, usize), TensorError> {
    match *shape {
        [r, c] => Ok((r, c)),
        _ => Err(TensorError::InvalidArgument { op, reason: alloc::format!("expected a matrix, got {shape:?}") }),
    }
}

impl<T: Real> Tape<T> {
    /// `[M×K] · [K×N] → [M×N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            T::one(),
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), k, n),
            T::zero(),
            &mut out,
        );
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor::new([m, n], out)?, Op::MatMul { a, b }, rg, "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = dims2("transpose", self.shape(x))?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.requires_grad(x);
        self.push(Tensor::new([c, r], out)?, Op::Transpose { x }, rg, "transpose")
    }
}

pub(super) fn backward_matmul<T: Real>(a: Var, b: Var, g: &[T], ctx: &mut Grads<'_, T>) {
    let av = ctx.value(a);
    let bv = ctx.value(b);
    let (m, k) = (av.shape()[0], av.shape()[1]);
    let n = bv.shape()[1];
    // dA = dC · Bᵀ
    if let Some(s) = ctx.slot(a) {
        gemm(T::one(), MatRef::new(g, m, n), MatRef::t(bv.data(), n, k), T::one(), s);
    }
    // dB = Aᵀ · dC
    if let Some(s) = ctx.slot(b) {
        gemm(T::one(), MatRef::t(av.data(), k, m), MatRef::new(g, m, n), T::one(), s);
    }
}

pub(super) fn backward_transpose<T: Real>(x: Var, g: &[T], ctx: &mut Grads<'_, T>) {
    let (r, c) = (ctx.value(x).shape()[0], ctx.value(x).shape()[1]);
    if let Some(s) = ctx.slot(x) {
        for i in 0..r {
            for j in 0..c {
                s[i * c + j] += g[j * r + i];
            }
        }
    }
}
