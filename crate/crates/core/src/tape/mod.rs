//! Reverse-mode differentiation over a linear operation record.
//!
//! A [`Tape`] is built fresh for one forward/backward pass. Every operation
//! appends a node holding its output value and the rule needed to push an
//! output gradient back to its inputs; [`Tape::backward`] walks the nodes in
//! reverse order. Parameters live outside the tape and are copied in as
//! leaves with [`Tape::param`], so updates never touch a recorded graph.
//!
//! Broadcasting is limited to equal-rank operands whose extents agree or are
//! 1 on each axis (singleton broadcasting).

mod conv;
mod elementwise;
mod linalg;
mod shape;

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

pub use conv::ConvSpec;
pub use elementwise::UnaryKind;
use elementwise::BinaryKind;

use crate::error::TensorError;
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule supplied by code outside this module.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &'static str;

    /// Accumulate the input gradients implied by `grad_out`, the gradient
    /// with respect to this node's output value `out`.
    fn backward(&self, out: &Tensor<T>, grad_out: &[T], grads: &mut Grads<'_, T>);
}

pub(crate) enum Op<T: Real> {
    Leaf,
    Binary { kind: BinaryKind, a: Var, b: Var },
    Unary { kind: UnaryKind, x: Var },
    Scale { x: Var, factor: T },
    AddScalar { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    MatMul { a: Var, b: Var },
    Transpose { x: Var },
    Reshape { x: Var },
    Concat { parts: Vec<Var> },
    Slice { x: Var, offset: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec, cols: Vec<T> },
    AvgPool2d { x: Var, kernel: usize },
    Upsample { x: Var, factor: usize, value_scale: T },
    Detach,
    Custom(Box<dyn CustomOp<T>>),
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradient buffers handed to backward rules.
pub struct Grads<'a, T: Real> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Real> Grads<'a, T> {
    pub fn value(&self, v: Var) -> &'a Tensor<T> {
        let nodes: &'a [Node<T>] = self.nodes;
        &nodes[v.0].value
    }

    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Mutable gradient buffer of `v`, zero-initialized on first use.
    /// `None` when `v` does not participate in differentiation.
    pub fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]).as_mut_slice())
    }

    /// Value of `v` together with its gradient buffer.
    pub fn value_and_slot(&mut self, v: Var) -> (&Tensor<T>, Option<&mut [T]>) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return (&node.value, None);
        }
        let n = node.value.numel();
        let g = self.grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
        (&node.value, Some(g.as_mut_slice()))
    }

    pub(crate) fn accumulate(&mut self, v: Var, g: &[T]) {
        if let Some(slot) = self.slot(v) {
            for (s, &x) in slot.iter_mut().zip(g) {
                *s += x;
            }
        }
    }
}

/// Single-use record of one forward pass.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    check_finite: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new(), check_finite: true }
    }

    /// Drop every recorded node, keeping allocations for reuse.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`backward`](Self::backward) call.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Same value, cut from the graph.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.nodes[x.0].value.clone();
        self.push_unchecked(value, Op::Detach, false)
    }

    /// Record an operation whose backward rule lives outside this module.
    pub fn custom(
        &mut self,
        value: Tensor<T>,
        inputs: &[Var],
        op: Box<dyn CustomOp<T>>,
    ) -> Result<Var, TensorError> {
        let name = op.name();
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        self.push(value, Op::Custom(op), rg, name)
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        op: Op<T>,
        requires_grad: bool,
        name: &'static str,
    ) -> Result<Var, TensorError> {
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn push_unchecked(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.requires_grad(v))
    }

    /// Propagate d(loss)/d(node) to every node recorded before `loss`.
    ///
    /// Gradients from an earlier call are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.nodes[loss.0].value.shape();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(TensorError::NotScalar(shape.to_vec()));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut ctx = Grads { nodes: &self.nodes, grads: &mut self.grads };
            backward_node(node, &g, &mut ctx);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }
}

fn backward_node<T: Real>(node: &Node<T>, g: &[T], ctx: &mut Grads<'_, T>) {
    match &node.op {
        Op::Leaf | Op::Detach => {}
        Op::Binary { kind, a, b } => elementwise::backward_binary(*kind, *a, *b, g, ctx),
        Op::Unary { kind, x } => elementwise::backward_unary(*kind, *x, &node.value, g, ctx),
        Op::Scale { x, factor } => {
            if let Some(s) = ctx.slot(*x) {
                for (s, &gi) in s.iter_mut().zip(g) {
                    *s += gi * *factor;
                }
            }
        }
        Op::AddScalar { x } => ctx.accumulate(*x, g),
        Op::Sum { x } => {
            if let Some(s) = ctx.slot(*x) {
                s.iter_mut().for_each(|s| *s += g[0]);
            }
        }
        Op::Mean { x } => {
            if let Some(s) = ctx.slot(*x) {
                let gi = g[0] / T::from_f64(s.len() as f64);
                s.iter_mut().for_each(|s| *s += gi);
            }
        }
        Op::MatMul { a, b } => linalg::backward_matmul(*a, *b, g, ctx),
        Op::Transpose { x } => linalg::backward_transpose(*x, g, ctx),
        Op::Reshape { x } => ctx.accumulate(*x, g),
        Op::Concat { parts } => shape::backward_concat(parts, g, ctx),
        Op::Slice { x, offset } => {
            let off = *offset;
            if let Some(s) = ctx.slot(*x) {
                for (s, &gi) in s[off..off + g.len()].iter_mut().zip(g) {
                    *s += gi;
                }
            }
        }
        Op::Conv2d { x, w, b, spec, cols } => conv::backward_conv2d(*x, *w, *b, spec, cols, g, ctx),
        Op::AvgPool2d { x, kernel } => conv::backward_avgpool(*x, *kernel, g, ctx),
        Op::Upsample { x, factor, value_scale } => {
            conv::backward_upsample(*x, *factor, *value_scale, g, ctx)
        }
        Op::Custom(op) => op.backward(&node.value, g, ctx),
    }
}

#[cfg(test)]
mod tests;
