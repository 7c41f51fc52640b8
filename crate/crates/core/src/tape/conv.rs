use alloc::vec;
use alloc::vec::Vec;

use super::{Grads, Op, Tape, Var};
use crate::error::TensorError;
use crate::real::{gemm, MatRef, Real};
use crate::tensor::Tensor;

/// Geometry of one 2-D convolution over a `[C_in, H, W]` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }
}

fn im2col<T: Real>(x: &[T], s: &ConvSpec) -> Vec<T> {
    let (ho, wo) = (s.out_height(), s.out_width());
    let plane = ho * wo;
    let mut cols = vec![T::zero(); s.patch_len() * plane];
    for c in 0..s.c_in {
        let src = &x[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let row = (c * s.kernel + ky) * s.kernel + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    let src_row = &src[iy as usize * s.width..(iy as usize + 1) * s.width];
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                        if ix >= 0 && ix < s.width as isize {
                            dst[oy * wo + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Real>(cols: &[T], s: &ConvSpec, dx: &mut [T]) {
    let (ho, wo) = (s.out_height(), s.out_width());
    let plane = ho * wo;
    for c in 0..s.c_in {
        let dst = &mut dx[c * s.height * s.width..(c + 1) * s.height * s.width];
        for ky in 0..s.kernel {
            for kx in 0..s.kernel {
                let row = (c * s.kernel + ky) * s.kernel + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    let base = iy as usize * s.width;
                    for ox in 0..wo {
                        let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                        if ix >= 0 && ix < s.width as isize {
                            dst[base + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    /// Cross-correlation of `x: [C_in, H, W]` with `w: [C_out, C_in, k, k]`
    /// plus an optional `bias: [C_out]`, zero padding on every side.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bad = |reason: alloc::string::String| TensorError::InvalidArgument { op: "conv2d", reason };
        let (&[c_in, height, width], &[c_out, wc, kh, kw]) = (&xs[..], &ws[..]) else {
            return Err(bad(alloc::format!("input {xs:?}, kernel {ws:?}")));
        };
        if wc != c_in || kh != kw {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: xs, rhs: ws });
        }
        if stride == 0 {
            return Err(bad("stride must be positive".into()));
        }
        if kh > height + 2 * padding || kw > width + 2 * padding {
            return Err(bad(alloc::format!("kernel {kh} larger than padded input {height}x{width}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: ws, rhs: self.shape(b).to_vec() });
            }
        }
        let spec = ConvSpec { c_in, c_out, height, width, kernel: kh, stride, padding };
        let (ho, wo) = (spec.out_height(), spec.out_width());
        if ho == 0 || wo == 0 {
            return Err(bad("empty output".into()));
        }
        let plane = ho * wo;
        let cols = if spec.is_pointwise() { Vec::new() } else { im2col(self.value(x).data(), &spec) };
        let col_ref = if spec.is_pointwise() { self.value(x).data() } else { &cols[..] };
        let mut out = vec![T::zero(); c_out * plane];
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (o, chunk) in out.chunks_mut(plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bv[o]);
            }
        }
        gemm(
            T::one(),
            MatRef::new(self.value(w).data(), c_out, spec.patch_len()),
            MatRef::new(col_ref, spec.patch_len(), plane),
            T::one(),
            &mut out,
        );
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let rg = self.any_grad(&inputs);
        let value = Tensor::new([c_out, ho, wo], out)?;
        self.push(value, Op::Conv2d { x, w, b: bias, spec, cols }, rg, "conv2d")
    }

    /// Mean over non-overlapping `kernel × kernel` windows of the last two
    /// axes. Extents must be divisible by `kernel`.
    pub fn avgpool2d(&mut self, x: Var, kernel: usize) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || kernel == 0 {
            return Err(TensorError::InvalidArgument {
                op: "avgpool2d",
                reason: alloc::format!("shape {shape:?}, kernel {kernel}"),
            });
        }
        let nd = shape.len();
        let (h, w) = (shape[nd - 2], shape[nd - 1]);
        for size in [h, w] {
            if size % kernel != 0 {
                return Err(TensorError::Indivisible { op: "avgpool2d", size, divisor: kernel });
            }
        }
        let (ho, wo) = (h / kernel, w / kernel);
        let lead: usize = shape[..nd - 2].iter().product();
        let src = self.value(x).data();
        let inv = T::one() / T::from_f64((kernel * kernel) as f64);
        let mut out = vec![T::zero(); lead * ho * wo];
        for c in 0..lead {
            let plane = &src[c * h * w..(c + 1) * h * w];
            let dst = &mut out[c * ho * wo..(c + 1) * ho * wo];
            for y in 0..h {
                for xx in 0..w {
                    dst[(y / kernel) * wo + xx / kernel] += plane[y * w + xx];
                }
            }
            dst.iter_mut().for_each(|v| *v *= inv);
        }
        let mut out_shape = shape;
        out_shape[nd - 2] = ho;
        out_shape[nd - 1] = wo;
        let rg = self.requires_grad(x);
        self.push(Tensor::new(out_shape, out)?, Op::AvgPool2d { x, kernel }, rg, "avgpool2d")
    }

    /// Bilinear enlargement of `[C, h, w]` by an integer factor, multiplying
    /// values by `value_scale`. Output pixel `u` samples source coordinate
    /// `u / factor`, so source cell `i` sits on output pixel `factor * i`;
    /// coordinates past the last cell repeat the edge.
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize, value_scale: T) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let [c, h, w] = shape[..] else {
            return Err(TensorError::InvalidArgument {
                op: "upsample_bilinear",
                reason: alloc::format!("expected [C, H, W], got {shape:?}"),
            });
        };
        if factor == 0 {
            return Err(TensorError::InvalidArgument { op: "upsample_bilinear", reason: "zero factor".into() });
        }
        let ty = axis_taps::<T>(h, factor);
        let tx = axis_taps::<T>(w, factor);
        let (oh, ow) = (h * factor, w * factor);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let top = plane[y0 * w + x0] * (T::one() - wx) + plane[y0 * w + x1] * wx;
                    let bot = plane[y1 * w + x0] * (T::one() - wx) + plane[y1 * w + x1] * wx;
                    dst[oy * ow + ox] = (top * (T::one() - wy) + bot * wy) * value_scale;
                }
            }
        }
        let rg = self.requires_grad(x);
        let value = Tensor::new([c, oh, ow], out)?;
        self.push(value, Op::Upsample { x, factor, value_scale }, rg, "upsample_bilinear")
    }
}

/// Per output index: (low source index, high source index, weight of high).
fn axis_taps<T: Real>(n: usize, factor: usize) -> Vec<(usize, usize, T)> {
    (0..n * factor)
        .map(|u| {
            let i0 = u / factor;
            if i0 + 1 >= n {
                (n - 1, n - 1, T::zero())
            } else {
                let frac = T::from_f64((u % factor) as f64 / factor as f64);
                (i0, i0 + 1, frac)
            }
        })
        .collect()
}

pub(super) fn backward_conv2d<T: Real>(
    x: Var,
    w: Var,
    b: Option<Var>,
    spec: &ConvSpec,
    cols: &[T],
    g: &[T],
    ctx: &mut Grads<'_, T>,
) {
    let plane = spec.out_height() * spec.out_width();
    let patch = spec.patch_len();
    let col_ref = if spec.is_pointwise() { ctx.value(x).data() } else { cols };
    if let Some(bs) = b.and_then(|b| ctx.slot(b)) {
        for (o, chunk) in g.chunks(plane).enumerate() {
            bs[o] += chunk.iter().copied().sum();
        }
    }
    // dW = dOut · colsᵀ
    if let Some(ws) = ctx.slot(w) {
        gemm(T::one(), MatRef::new(g, spec.c_out, plane), MatRef::t(col_ref, plane, patch), T::one(), ws);
    }
    if ctx.wants(x) {
        let wv = ctx.value(w).data();
        // dcols = Wᵀ · dOut
        let wt = MatRef::t(wv, patch, spec.c_out);
        let dout = MatRef::new(g, spec.c_out, plane);
        let xs = ctx.slot(x).expect("requires grad");
        if spec.is_pointwise() {
            gemm(T::one(), wt, dout, T::one(), xs);
        } else {
            let mut dcols = vec![T::zero(); patch * plane];
            gemm(T::one(), wt, dout, T::zero(), &mut dcols);
            col2im_add(&dcols, spec, xs);
        }
    }
}

pub(super) fn backward_avgpool<T: Real>(x: Var, kernel: usize, g: &[T], ctx: &mut Grads<'_, T>) {
    let shape = ctx.value(x).shape();
    let nd = shape.len();
    let (h, w) = (shape[nd - 2], shape[nd - 1]);
    let (ho, wo) = (h / kernel, w / kernel);
    let inv = T::one() / T::from_f64((kernel * kernel) as f64);
    let Some(s) = ctx.slot(x) else { return };
    for (c, plane) in s.chunks_mut(h * w).enumerate() {
        let src = &g[c * ho * wo..(c + 1) * ho * wo];
        for y in 0..h {
            for xx in 0..w {
                plane[y * w + xx] += src[(y / kernel) * wo + xx / kernel] * inv;
            }
        }
    }
}

pub(super) fn backward_upsample<T: Real>(
    x: Var,
    factor: usize,
    value_scale: T,
    g: &[T],
    ctx: &mut Grads<'_, T>,
) {
    let shape = ctx.value(x).shape();
    let (h, w) = (shape[1], shape[2]);
    let ty = axis_taps::<T>(h, factor);
    let tx = axis_taps::<T>(w, factor);
    let (oh, ow) = (h * factor, w * factor);
    let Some(s) = ctx.slot(x) else { return };
    for (ch, plane) in s.chunks_mut(h * w).enumerate() {
        let src = &g[ch * oh * ow..(ch + 1) * oh * ow];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let gv = src[oy * ow + ox] * value_scale;
                plane[y0 * w + x0] += gv * (T::one() - wy) * (T::one() - wx);
                plane[y0 * w + x1] += gv * (T::one() - wy) * wx;
                plane[y1 * w + x0] += gv * wy * (T::one() - wx);
                plane[y1 * w + x1] += gv * wy * wx;
            }
        }
    }
}
