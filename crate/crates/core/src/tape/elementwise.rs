use alloc::vec::Vec;

use super::{Grads, Op, Tape, Var};
use crate::error::TensorError;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Neg,
    Exp,
    Log,
    Relu,
    Sigmoid,
    Tanh,
    Square,
    Sqrt,
}

impl UnaryKind {
    pub const ALL: [UnaryKind; 8] = [
        UnaryKind::Neg,
        UnaryKind::Exp,
        UnaryKind::Log,
        UnaryKind::Relu,
        UnaryKind::Sigmoid,
        UnaryKind::Tanh,
        UnaryKind::Square,
        UnaryKind::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryKind::Neg => "neg",
            UnaryKind::Exp => "exp",
            UnaryKind::Log => "log",
            UnaryKind::Relu => "relu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Square => "square",
            UnaryKind::Sqrt => "sqrt",
        }
    }

    fn apply<T: Real>(self, x: T) -> T {
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log => x.ln(),
            UnaryKind::Relu => x.max(T::zero()),
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Square => x * x,
            UnaryKind::Sqrt => x.sqrt(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            UnaryKind::Neg => -T::one(),
            UnaryKind::Exp => y,
            UnaryKind::Log => T::one() / x,
            UnaryKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::Sigmoid => y * (T::one() - y),
            UnaryKind::Tanh => T::one() - y * y,
            UnaryKind::Square => x + x,
            UnaryKind::Sqrt => T::from_f64(0.5) / y,
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl BinaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            BinaryKind::Add => a + b,
            BinaryKind::Sub => a - b,
            BinaryKind::Mul => a * b,
            BinaryKind::Div => a / b,
        }
    }
}

/// Index plan for a singleton-broadcast binary op.
struct Broadcast {
    out_shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
}

impl Broadcast {
    fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self, TensorError> {
        let mismatch =
            || TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() };
        if a.len() != b.len() {
            return Err(mismatch());
        }
        let mut out_shape = Vec::with_capacity(a.len());
        for (&da, &db) in a.iter().zip(b) {
            if da == db || db == 1 {
                out_shape.push(da);
            } else if da == 1 {
                out_shape.push(db);
            } else {
                return Err(mismatch());
            }
        }
        Ok(Self { a_strides: strides(a), b_strides: strides(b), out_shape })
    }

    /// Calls `f(out_index, a_index, b_index)` for every output element.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let nd = self.out_shape.len();
        let total: usize = self.out_shape.iter().product();
        let mut idx = alloc::vec![0usize; nd];
        let (mut ia, mut ib) = (0usize, 0usize);
        for o in 0..total {
            f(o, ia, ib);
            for d in (0..nd).rev() {
                idx[d] += 1;
                ia += self.a_strides[d];
                ib += self.b_strides[d];
                if idx[d] < self.out_shape[d] {
                    break;
                }
                ia -= self.a_strides[d] * idx[d];
                ib -= self.b_strides[d] * idx[d];
                idx[d] = 0;
            }
        }
    }
}

/// Contiguous strides with 0 on singleton axes.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = alloc::vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        s[d] = if shape[d] == 1 { 0 } else { acc };
        acc *= shape[d];
    }
    s
}

impl<T: Real> Tape<T> {
    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let value = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| kind.apply(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else {
            let plan = Broadcast::new(kind.name(), av.shape(), bv.shape())?;
            let mut data = alloc::vec![T::zero(); plan.out_shape.iter().product()];
            let (ad, bd) = (av.data(), bv.data());
            plan.for_each(|o, i, j| data[o] = kind.apply(ad[i], bd[j]));
            Tensor::new(plan.out_shape, data)?
        };
        let rg = self.any_grad(&[a, b]);
        self.push(value, Op::Binary { kind, a, b }, rg, kind.name())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| kind.apply(v));
        let rg = self.requires_grad(x);
        self.push(value, Op::Unary { kind, x }, rg, kind.name())
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Neg, x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Log, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Square, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Sqrt, x)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.requires_grad(x);
        self.push(value, Op::Scale { x, factor }, rg, "scale")
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| v + c);
        let rg = self.requires_grad(x);
        self.push(value, Op::AddScalar { x }, rg, "add_scalar")
    }

    /// `1 - x`, the complement used by gated updates.
    pub fn one_minus(&mut self, x: Var) -> Result<Var, TensorError> {
        let n = self.neg(x)?;
        self.add_scalar(n, T::one())
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.requires_grad(x);
        self.push(value, Op::Sum { x }, rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / T::from_f64(v.numel() as f64));
        let rg = self.requires_grad(x);
        self.push(value, Op::Mean { x }, rg, "mean")
    }
}

pub(super) fn backward_unary<T: Real>(
    kind: UnaryKind,
    x: Var,
    out: &Tensor<T>,
    g: &[T],
    ctx: &mut Grads<'_, T>,
) {
    let (xv, slot) = ctx.value_and_slot(x);
    let Some(slot) = slot else { return };
    for (((s, &gi), &xi), &yi) in slot.iter_mut().zip(g).zip(xv.data()).zip(out.data()) {
        *s += gi * kind.derivative(xi, yi);
    }
}

pub(super) fn backward_binary<T: Real>(
    kind: BinaryKind,
    a: Var,
    b: Var,
    g: &[T],
    ctx: &mut Grads<'_, T>,
) {
    let av = ctx.value(a);
    let bv = ctx.value(b);
    // d(out)/da and d(out)/db for one element pair.
    let da = |_x: T, y: T| match kind {
        BinaryKind::Add | BinaryKind::Sub => T::one(),
        BinaryKind::Mul => y,
        BinaryKind::Div => T::one() / y,
    };
    let db = |x: T, y: T| match kind {
        BinaryKind::Add => T::one(),
        BinaryKind::Sub => -T::one(),
        BinaryKind::Mul => x,
        BinaryKind::Div => -x / (y * y),
    };
    if av.shape() == bv.shape() {
        if let Some(s) = ctx.slot(a) {
            for i in 0..g.len() {
                s[i] += g[i] * da(av.data()[i], bv.data()[i]);
            }
        }
        if let Some(s) = ctx.slot(b) {
            for i in 0..g.len() {
                s[i] += g[i] * db(av.data()[i], bv.data()[i]);
            }
        }
        return;
    }
    let plan = Broadcast::new(kind.name(), av.shape(), bv.shape())
        .expect("shapes validated in forward");
    let (ad, bd) = (av.data(), bv.data());
    if let Some(s) = ctx.slot(a) {
        plan.for_each(|o, i, j| s[i] += g[o] * da(ad[i], bd[j]));
    }
    if let Some(s) = ctx.slot(b) {
        plan.for_each(|o, i, j| s[j] += g[o] * db(ad[i], bd[j]));
    }
}
