//! Contrastive flow loss over feature maps.
//!
//! Query cell `i` of the first map sits on pixel `stride * i`; its label
//! flow, divided by `stride`, gives a fractional target `j` in the second
//! map. The positive key is the bilinear sample of the second map at `j`;
//! every other cell except the one nearest to `j` is a negative. All
//! similarities come from one `N x N` product of the two maps.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::LossConfig;
use crate::error::{Error, FlowError, TensorError};
use crate::flow::{FlowField, ValidityMask};
use crate::real::{gemm, MatRef, Real};
use crate::tape::{CustomOp, Grads, Tape, Var};
use crate::tensor::Tensor;

/// One contrastive query: source cell, bilinear corners of its target with
/// weights, and the excluded nearest cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub source: usize,
    pub corners: [(usize, f64); 4],
    pub nearest: usize,
}

/// Queries whose pixel is valid and whose target lies inside the map.
pub fn contrastive_queries(
    flow: &FlowField,
    mask: &ValidityMask,
    h: usize,
    w: usize,
    stride: usize,
    max_queries: usize,
) -> Result<Vec<Query>, Error> {
    if (flow.width, flow.height) != (w * stride, h * stride) || (mask.width, mask.height) != (flow.width, flow.height)
    {
        return Err(FlowError::DimensionMismatch(w * stride, h * stride, flow.width, flow.height).into());
    }
    let mut out = Vec::new();
    let s = stride as f64;
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x * stride, y * stride);
            if !mask.get(px, py) {
                continue;
            }
            let (u, v) = flow.get(px, py);
            let (jx, jy) = (x as f64 + u as f64 / s, y as f64 + v as f64 / s);
            if !(jx >= 0.0 && jy >= 0.0 && jx <= (w - 1) as f64 && jy <= (h - 1) as f64) {
                continue;
            }
            let (x0, y0) = (jx.floor() as usize, jy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (jx - x0 as f64, jy - y0 as f64);
            let nearest = (Float::round(jy) as usize) * w + Float::round(jx) as usize;
            out.push(Query {
                source: y * w + x,
                corners: [
                    (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
                    (y0 * w + x1, fx * (1.0 - fy)),
                    (y1 * w + x0, (1.0 - fx) * fy),
                    (y1 * w + x1, fx * fy),
                ],
                nearest,
            });
        }
    }
    if max_queries > 0 && out.len() > max_queries {
        let step = out.len().div_ceil(max_queries);
        out = out.into_iter().step_by(step).collect();
    }
    Ok(out)
}

/// Per-column L2 normalization of a `[C, N]` matrix; returns the norms.
fn normalize_columns<T: Real>(m: &mut [T], c: usize, n: usize) -> Vec<T> {
    let eps = T::from_f64(1e-6);
    let mut norms = vec![T::zero(); n];
    for k in 0..c {
        for i in 0..n {
            norms[i] += m[k * n + i] * m[k * n + i];
        }
    }
    for v in norms.iter_mut() {
        *v = v.sqrt().max(eps);
    }
    for k in 0..c {
        for i in 0..n {
            m[k * n + i] /= norms[i];
        }
    }
    norms
}

/// Maps a gradient with respect to normalized columns back through the
/// normalization.
fn normalize_backward<T: Real>(grad: &mut [T], unit: &[T], norms: &[T], c: usize, n: usize) {
    for i in 0..n {
        let mut dot = T::zero();
        for k in 0..c {
            dot += grad[k * n + i] * unit[k * n + i];
        }
        for k in 0..c {
            grad[k * n + i] = (grad[k * n + i] - unit[k * n + i] * dot) / norms[i];
        }
    }
}

struct Contrastive<T> {
    g1: Var,
    g2: Var,
    /// Feature matrices as used in the similarity, `[C, N]`.
    a: Vec<T>,
    b: Vec<T>,
    norms: Option<(Vec<T>, Vec<T>)>,
    /// d(loss)/d(similarity), `[N, N]`, already divided by the temperature.
    dsim: Vec<T>,
    c: usize,
    n: usize,
}

impl<T: Real> CustomOp<T> for Contrastive<T> {
    fn name(&self) -> &'static str {
        "contrastive_flow_loss"
    }

    fn backward(&self, _out: &Tensor<T>, g: &[T], grads: &mut Grads<'_, T>) {
        let (c, n) = (self.c, self.n);
        // sim = a^T b, so d a = b dsim^T and d b = a dsim.
        if grads.wants(self.g1) {
            let mut da = vec![T::zero(); c * n];
            gemm(g[0], MatRef::new(&self.b, c, n), MatRef::t(&self.dsim, n, n), T::zero(), &mut da);
            if let Some((n1, _)) = &self.norms {
                normalize_backward(&mut da, &self.a, n1, c, n);
            }
            grads.accumulate(self.g1, &da);
        }
        if grads.wants(self.g2) {
            let mut db = vec![T::zero(); c * n];
            gemm(g[0], MatRef::new(&self.a, c, n), MatRef::new(&self.dsim, n, n), T::zero(), &mut db);
            if let Some((_, n2)) = &self.norms {
                normalize_backward(&mut db, &self.b, n2, c, n);
            }
            grads.accumulate(self.g2, &db);
        }
    }
}

/// Mean over usable queries of `-log l_i`, where `l_i` is the softmax weight
/// of the positive key among the positive and the negatives.
pub fn contrastive_flow_loss<T: Real>(
    tape: &mut Tape<T>,
    g1: Var,
    g2: Var,
    flow: &FlowField,
    mask: &ValidityMask,
    stride: usize,
    cfg: &LossConfig,
) -> Result<Var, Error> {
    if !(cfg.temperature > 0.0) {
        return Err(Error::Config("contrastive temperature must be positive".into()));
    }
    let shape = tape.shape(g1).to_vec();
    if shape.len() != 3 || tape.shape(g2) != &shape[..] {
        return Err(TensorError::ShapeMismatch {
            op: "contrastive_flow_loss",
            lhs: shape,
            rhs: tape.shape(g2).to_vec(),
        }
        .into());
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let n = h * w;
    let queries = contrastive_queries(flow, mask, h, w, stride, cfg.max_queries)?;
    if queries.is_empty() {
        return Err(FlowError::EmptyMask.into());
    }
    let mut a = tape.value(g1).data().to_vec();
    let mut b = tape.value(g2).data().to_vec();
    let norms = cfg.normalize_features.then(|| (normalize_columns(&mut a, c, n), normalize_columns(&mut b, c, n)));

    let inv_tau = T::from_f64(1.0 / cfg.temperature);
    let mut sim = vec![T::zero(); n * n];
    gemm(inv_tau, MatRef::t(&a, n, c), MatRef::new(&b, c, n), T::zero(), &mut sim);

    let scale = T::from_f64(1.0 / queries.len() as f64);
    let mut dsim = vec![T::zero(); n * n];
    let mut total = T::zero();
    for q in &queries {
        let row = &sim[q.source * n..(q.source + 1) * n];
        let pos: T = q.corners.iter().map(|&(k, wk)| row[k] * T::from_f64(wk)).sum();
        let mut m = pos;
        for (k, &s) in row.iter().enumerate() {
            if k != q.nearest && s > m {
                m = s;
            }
        }
        let mut denom = (pos - m).exp();
        for (k, &s) in row.iter().enumerate() {
            if k != q.nearest {
                denom += (s - m).exp();
            }
        }
        let lse = m + denom.ln();
        total += lse - pos;
        // d/d row_k of (lse - pos)
        let drow = &mut dsim[q.source * n..(q.source + 1) * n];
        for (k, &s) in row.iter().enumerate() {
            if k != q.nearest {
                drow[k] += (s - lse).exp() * scale * inv_tau;
            }
        }
        let p_pos = (pos - lse).exp();
        for &(k, wk) in &q.corners {
            drow[k] += (p_pos - T::one()) * T::from_f64(wk) * scale * inv_tau;
        }
    }
    let value = Tensor::scalar(total * scale);
    let op = Contrastive { g1, g2, a, b, norms, dsim, c, n };
    Ok(tape.custom(value, &[g1, g2], Box::new(op))?)
}
