//! Windowed bilinear sampling of the correlation pyramid.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::TensorError;
use crate::real::Real;
use crate::tape::{CustomOp, Grads, Tape, Var};
use crate::tensor::Tensor;

/// One bilinear tap with edge clamping. `dx`/`dy` say whether the sample
/// position was inside the level (and therefore differentiable).
struct Tap<T> {
    i00: usize,
    i10: usize,
    i01: usize,
    i11: usize,
    fx: T,
    fy: T,
    dx: bool,
    dy: bool,
}

fn tap<T: Real>(px: T, py: T, w: usize, h: usize) -> Tap<T> {
    let wmax = T::from_f64((w - 1) as f64);
    let hmax = T::from_f64((h - 1) as f64);
    let dx = px >= T::zero() && px <= wmax;
    let dy = py >= T::zero() && py <= hmax;
    let xc = px.max(T::zero()).min(wmax);
    let yc = py.max(T::zero()).min(hmax);
    let x0 = Real::to_f64(xc.floor()) as usize;
    let y0 = Real::to_f64(yc.floor()) as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    Tap {
        i00: y0 * w + x0,
        i10: y0 * w + x1,
        i01: y1 * w + x0,
        i11: y1 * w + x1,
        fx: xc - T::from_f64(x0 as f64),
        fy: yc - T::from_f64(y0 as f64),
        dx,
        dy,
    }
}

/// Calls `f(level, out_index, plane_offset, tap, level_scale)` for every
/// sample of the lookup.
fn for_each_tap<T: Real>(
    level_shapes: &[(usize, usize)],
    flow: &[T],
    h: usize,
    w: usize,
    radius: usize,
    mut f: impl FnMut(usize, usize, usize, &Tap<T>, T),
) {
    let n = h * w;
    let side = 2 * radius + 1;
    let half = T::from_f64(0.5);
    for (s, &(lh, lw)) in level_shapes.iter().enumerate() {
        let inv = T::from_f64(1.0 / (1u64 << s) as f64);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let cx = (T::from_f64(x as f64) + flow[i] + half) * inv - half;
                let cy = (T::from_f64(y as f64) + flow[n + i] + half) * inv - half;
                for a in 0..side {
                    for b in 0..side {
                        let px = cx + T::from_f64(b as f64 - radius as f64);
                        let py = cy + T::from_f64(a as f64 - radius as f64);
                        let t = tap(px, py, lw, lh);
                        let ch = (s * side + a) * side + b;
                        f(s, ch * n + i, i * lh * lw, &t, inv);
                    }
                }
            }
        }
    }
}

struct Lookup {
    levels: Vec<Var>,
    flow: Var,
    radius: usize,
    h: usize,
    w: usize,
}

impl<T: Real> CustomOp<T> for Lookup {
    fn name(&self) -> &'static str {
        "corr_lookup"
    }

    fn backward(&self, _out: &Tensor<T>, g: &[T], grads: &mut Grads<'_, T>) {
        let shapes: Vec<(usize, usize)> = self
            .levels
            .iter()
            .map(|&l| {
                let s = grads.value(l).shape();
                (s[1], s[2])
            })
            .collect();
        let flow = grads.value(self.flow).data();
        let level_values: Vec<&[T]> = self.levels.iter().map(|&l| grads.value(l).data()).collect();
        let mut level_grads: Vec<Option<Vec<T>>> =
            self.levels.iter().map(|&l| grads.wants(l).then(|| vec![T::zero(); grads.value(l).numel()])).collect();
        let mut flow_grad = grads.wants(self.flow).then(|| vec![T::zero(); flow.len()]);
        let n = self.h * self.w;
        let one = T::one();
        for_each_tap(&shapes, flow, self.h, self.w, self.radius, |s, o, base, t, inv| {
            let go = g[o];
            if go == T::zero() {
                return;
            }
            if let Some(lg) = level_grads[s].as_mut() {
                lg[base + t.i00] += go * (one - t.fx) * (one - t.fy);
                lg[base + t.i10] += go * t.fx * (one - t.fy);
                lg[base + t.i01] += go * (one - t.fx) * t.fy;
                lg[base + t.i11] += go * t.fx * t.fy;
            }
            if let Some(fg) = flow_grad.as_mut() {
                let v = level_values[s];
                let (v00, v10, v01, v11) = (v[base + t.i00], v[base + t.i10], v[base + t.i01], v[base + t.i11]);
                let i = o % n;
                if t.dx {
                    fg[i] += go * inv * ((one - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
                }
                if t.dy {
                    fg[n + i] += go * inv * ((one - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
                }
            }
        });
        for (l, lg) in self.levels.iter().zip(level_grads) {
            if let Some(lg) = lg {
                grads.accumulate(*l, &lg);
            }
        }
        if let Some(fg) = flow_grad {
            grads.accumulate(self.flow, &fg);
        }
    }
}

/// Samples every pyramid level on a `(2r+1)^2` window around each source
/// cell's flowed position. Level `s` sees the position scaled by `2^-s` with
/// cell centers aligned; samples clamp to the level's edge.
///
/// `levels[s]` has shape `[N, H / 2^s, W / 2^s]` with `N = H * W`, `flow` has
/// shape `[2, H, W]` in cells of the finest grid. The output is
/// `[levels * (2r+1)^2, H, W]`, level-major, then window row, then column.
pub fn lookup<T: Real>(tape: &mut Tape<T>, levels: &[Var], flow: Var, radius: usize) -> Result<Var, TensorError> {
    let fs = tape.shape(flow).to_vec();
    let [2, h, w] = fs[..] else {
        return Err(TensorError::InvalidArgument { op: "corr_lookup", reason: alloc::format!("flow shape {fs:?}") });
    };
    let mut shapes = Vec::with_capacity(levels.len());
    for &l in levels {
        match *tape.shape(l) {
            [n, lh, lw] if n == h * w && lh > 0 && lw > 0 => shapes.push((lh, lw)),
            ref other => {
                return Err(TensorError::ShapeMismatch { op: "corr_lookup", lhs: fs.clone(), rhs: other.to_vec() })
            }
        }
    }
    let side = 2 * radius + 1;
    let n = h * w;
    let mut out = vec![T::zero(); levels.len() * side * side * n];
    {
        let flow_v = tape.value(flow).data();
        let values: Vec<&[T]> = levels.iter().map(|&l| tape.value(l).data()).collect();
        let one = T::one();
        for_each_tap(&shapes, flow_v, h, w, radius, |s, o, base, t, _| {
            let v = values[s];
            let top = v[base + t.i00] * (one - t.fx) + v[base + t.i10] * t.fx;
            let bot = v[base + t.i01] * (one - t.fx) + v[base + t.i11] * t.fx;
            out[o] = top * (one - t.fy) + bot * t.fy;
        });
    }
    let value = Tensor::new([levels.len() * side * side, h, w], out)?;
    let mut inputs = levels.to_vec();
    inputs.push(flow);
    tape.custom(value, &inputs, Box::new(Lookup { levels: levels.to_vec(), flow, radius, h, w }))
}
