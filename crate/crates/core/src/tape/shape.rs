use alloc::vec::Vec;

use super::{Grads, Op, Tape, Var};
use crate::error::TensorError;
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.requires_grad(x);
        self.push(value, Op::Reshape { x }, rg, "reshape")
    }

    /// Stack along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            reason: "no operands".into(),
        })?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != tail.len() + 1 || s[1..] != tail[..] {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = alloc::vec![lead];
        shape.extend_from_slice(&tail);
        let rg = self.any_grad(parts);
        self.push(Tensor::new(shape, data)?, Op::Concat { parts: parts.to_vec() }, rg, "concat")
    }

    /// Rows `start..end` of axis 0.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || start >= end || end > shape[0] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                reason: alloc::format!("range {start}..{end} on shape {shape:?}"),
            });
        }
        let inner: usize = shape[1..].iter().product();
        let data = self.value(x).data()[start * inner..end * inner].to_vec();
        let mut out_shape = shape;
        out_shape[0] = end - start;
        let rg = self.requires_grad(x);
        self.push(Tensor::new(out_shape, data)?, Op::Slice { x, offset: start * inner }, rg, "slice")
    }
}

pub(super) fn backward_concat<T: Real>(parts: &[Var], g: &[T], ctx: &mut Grads<'_, T>) {
    let mut offset = 0;
    for &p in parts {
        let n = ctx.value(p).numel();
        ctx.accumulate(p, &g[offset..offset + n]);
        offset += n;
    }
}
