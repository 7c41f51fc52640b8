use alloc::vec::Vec;

use num_traits::Float;

use super::lookup::lookup;
use super::{param_layout, ModelConfig, Params};
use crate::error::{Error, TensorError};
use crate::flow::{FlowField, Image};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Appends x and y coordinate channels normalized to `[-1, 1]`.
///
/// Refuses anything but 3-channel input so coordinates are never appended
/// twice.
pub fn coordinate_encode(img: &Image) -> Result<Image, Error> {
    if img.channels != 3 {
        return Err(Error::Config(alloc::format!(
            "coordinate encoding expects 3 channels, got {}",
            img.channels
        )));
    }
    let (w, h) = (img.width, img.height);
    let norm = |i: usize, n: usize| if n > 1 { 2.0 * i as f32 / (n - 1) as f32 - 1.0 } else { -1.0 };
    let mut data = img.data.clone();
    data.reserve(2 * w * h);
    for _y in 0..h {
        data.extend((0..w).map(|x| norm(x, w)));
    }
    for y in 0..h {
        data.extend((0..w).map(|_| norm(y, h)));
    }
    Ok(Image::from_data(w, h, 5, data)?)
}

/// Network input for one frame: RGB mapped to `[-1, 1]`, followed by the
/// coordinate channels when enabled.
pub fn prepare_input<T: Real>(cfg: &ModelConfig, img: &Image) -> Result<Tensor<T>, Error> {
    cfg.check_input(img.width, img.height)?;
    if img.channels != 3 {
        return Err(Error::Config(alloc::format!("expected an RGB frame, got {} channels", img.channels)));
    }
    let src = if cfg.coord_encoding { coordinate_encode(img)? } else { img.clone() };
    let n = img.width * img.height;
    let data = src
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| T::from_f64(if i < 3 * n { 2.0 * v as f64 - 1.0 } else { v as f64 }))
        .collect();
    Ok(Tensor::new([src.channels, img.height, img.width], data)?)
}

#[derive(Clone, Copy)]
struct ConvVars {
    w: Var,
    b: Var,
}

struct EncoderVars {
    convs: Vec<ConvVars>,
    proj: ConvVars,
}

struct Bound {
    feature: EncoderVars,
    context: EncoderVars,
    motion_corr: ConvVars,
    motion_flow: ConvVars,
    motion_mix: ConvVars,
    gru_gates: ConvVars,
    gru_candidate: ConvVars,
    head_hidden: ConvVars,
    head_out: ConvVars,
}

/// Assigns parameter variables in [`param_layout`] order.
fn bind(cfg: &ModelConfig, vars: &[Var]) -> Result<Bound, Error> {
    let expected = param_layout(cfg).len();
    if vars.len() != expected {
        return Err(Error::Config(alloc::format!("expected {expected} parameter tensors, got {}", vars.len())));
    }
    let mut it = vars.chunks_exact(2).map(|p| ConvVars { w: p[0], b: p[1] });
    let mut next = || it.next().expect("length checked");
    let encoder = |next: &mut dyn FnMut() -> ConvVars| EncoderVars {
        convs: (0..cfg.encoder_depth()).map(|_| next()).collect(),
        proj: next(),
    };
    let feature = encoder(&mut next);
    let context = encoder(&mut next);
    Ok(Bound {
        feature,
        context,
        motion_corr: next(),
        motion_flow: next(),
        motion_mix: next(),
        gru_gates: next(),
        gru_candidate: next(),
        head_hidden: next(),
        head_out: next(),
    })
}

fn conv<T: Real>(tape: &mut Tape<T>, x: Var, p: ConvVars, stride: usize) -> Result<Var, TensorError> {
    let k = tape.shape(p.w)[2];
    tape.conv2d(x, p.w, Some(p.b), stride, k / 2)
}

const NORM_EPS: f64 = 1e-5;

/// Per-channel zero mean and unit variance over the spatial extent of a
/// `[C, H, W]` activation.
pub fn instance_norm<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var, TensorError> {
    let shape = tape.shape(x).to_vec();
    let (c, n) = (shape[0], shape[1] * shape[2]);
    let flat = tape.reshape(x, &[c, n])?;
    let avg = tape.constant(Tensor::full([n, 1], T::from_f64(1.0 / n as f64)));
    let mean = tape.matmul(flat, avg)?;
    let centered = tape.sub(flat, mean)?;
    let sq = tape.square(centered)?;
    let var = tape.matmul(sq, avg)?;
    let var = tape.add_scalar(var, T::from_f64(NORM_EPS))?;
    let std = tape.sqrt(var)?;
    let out = tape.div(centered, std)?;
    tape.reshape(out, &shape)
}

fn encode<T: Real>(tape: &mut Tape<T>, cfg: &ModelConfig, enc: &EncoderVars, x: Var) -> Result<Var, TensorError> {
    let mut h = x;
    for &c in &enc.convs {
        h = conv(tape, h, c, 2)?;
        if cfg.instance_norm {
            h = instance_norm(tape, h)?;
        }
        h = tape.relu(h)?;
    }
    conv(tape, h, enc.proj, 1)
}

/// All-pairs inner products `V[i, y, x] = <g1_i, g2_(y, x)>`, shape
/// `[H*W, H, W]`, optionally divided by `sqrt(C)`.
pub fn correlation_volume<T: Real>(tape: &mut Tape<T>, g1: Var, g2: Var, scaled: bool) -> Result<Var, TensorError> {
    let s1 = tape.shape(g1).to_vec();
    let s2 = tape.shape(g2).to_vec();
    if s1.len() != 3 || s1 != s2 {
        return Err(TensorError::ShapeMismatch { op: "correlation_volume", lhs: s1, rhs: s2 });
    }
    let (c, h, w) = (s1[0], s1[1], s1[2]);
    let a = tape.reshape(g1, &[c, h * w])?;
    let a = tape.transpose(a)?;
    let b = tape.reshape(g2, &[c, h * w])?;
    let mut v = tape.matmul(a, b)?;
    if scaled {
        v = tape.scale(v, T::from_f64(1.0 / Float::sqrt(c as f64)))?;
    }
    tape.reshape(v, &[h * w, h, w])
}

/// Level `s` averages the target dimensions of `V` over `2^s` blocks.
pub fn build_pyramid<T: Real>(tape: &mut Tape<T>, volume: Var, levels: usize) -> Result<Vec<Var>, TensorError> {
    let mut out = Vec::with_capacity(levels);
    out.push(volume);
    for s in 1..levels {
        out.push(tape.avgpool2d(volume, 1 << s)?);
    }
    Ok(out)
}

/// Result of one forward pass.
pub struct FlowOutput {
    /// Full-resolution estimates `[2, H, W]`, one per refinement step.
    pub flows: Vec<Var>,
    /// Matching features of both frames, `[C, H/stride, W/stride]`.
    pub features: (Var, Var),
}

/// Runs the network on prepared inputs `[C_in, H, W]`.
pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &[Var],
    input1: Var,
    input2: Var,
) -> Result<FlowOutput, Error> {
    cfg.validate()?;
    let shape = tape.shape(input1).to_vec();
    if shape.len() != 3 || shape[0] != cfg.input_channels() || tape.shape(input2) != &shape[..] {
        return Err(Error::Config(alloc::format!(
            "inputs must both be [{}, H, W], got {shape:?} and {:?}",
            cfg.input_channels(),
            tape.shape(input2)
        )));
    }
    cfg.check_input(shape[2], shape[1])?;
    let p = bind(cfg, params)?;
    let hc = cfg.hidden_channels;

    let g1 = encode(tape, cfg, &p.feature, input1)?;
    let g2 = encode(tape, cfg, &p.feature, input2)?;
    let (fh, fw) = (tape.shape(g1)[1], tape.shape(g1)[2]);

    let ctx = encode(tape, cfg, &p.context, input1)?;
    let h0 = tape.slice(ctx, 0, hc)?;
    let mut hidden = tape.tanh(h0)?;
    let c0 = tape.slice(ctx, hc, 2 * hc)?;
    let context = tape.relu(c0)?;

    let volume = correlation_volume(tape, g1, g2, cfg.scale_correlation)?;
    let pyramid = build_pyramid(tape, volume, cfg.corr_levels)?;

    let mut flow = tape.constant(Tensor::zeros([2, fh, fw]));
    let mut flows = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let base = if cfg.detach_flow { tape.detach(flow) } else { flow };
        let corr = lookup(tape, &pyramid, base, cfg.radius)?;

        let cm = conv(tape, corr, p.motion_corr, 1)?;
        let cm = tape.relu(cm)?;
        let fm = conv(tape, base, p.motion_flow, 1)?;
        let fm = tape.relu(fm)?;
        let both = tape.concat(&[cm, fm])?;
        let mix = conv(tape, both, p.motion_mix, 1)?;
        let mix = tape.relu(mix)?;
        let motion = tape.concat(&[mix, base])?;

        let hx = tape.concat(&[hidden, motion, context])?;
        let gates = conv(tape, hx, p.gru_gates, 1)?;
        let gates = tape.sigmoid(gates)?;
        let z = tape.slice(gates, 0, hc)?;
        let r = tape.slice(gates, hc, 2 * hc)?;
        let rh = tape.mul(r, hidden)?;
        let rhx = tape.concat(&[rh, motion, context])?;
        let q = conv(tape, rhx, p.gru_candidate, 1)?;
        let q = tape.tanh(q)?;
        let keep = tape.one_minus(z)?;
        let kept = tape.mul(keep, hidden)?;
        let new = tape.mul(z, q)?;
        hidden = tape.add(kept, new)?;

        let d = conv(tape, hidden, p.head_hidden, 1)?;
        let d = tape.relu(d)?;
        let delta = conv(tape, d, p.head_out, 1)?;
        flow = tape.add(base, delta)?;
        flows.push(tape.upsample_bilinear(flow, cfg.stride, T::from_f64(cfg.stride as f64))?);
    }
    Ok(FlowOutput { flows, features: (g1, g2) })
}

/// Final estimate of the network for one frame pair.
pub fn predict(cfg: &ModelConfig, params: &Params<f32>, img1: &Image, img2: &Image) -> Result<FlowField, Error> {
    let mut tape = Tape::<f32>::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let a = tape.constant(prepare_input(cfg, img1)?);
    let b = tape.constant(prepare_input(cfg, img2)?);
    let out = forward(&mut tape, cfg, &vars, a, b)?;
    let last = *out.flows.last().expect("at least one iteration");
    Ok(FlowField::from_planar(img1.width, img1.height, tape.value(last).data().to_vec())?)
}
