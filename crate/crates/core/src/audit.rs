//! Finite-difference sweep over every differentiable operation, the custom
//! backward rules and a tiny end-to-end network.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, TensorError};
use crate::flow::{FlowField, ValidityMask};
use crate::gradcheck::{grad_check_inputs, Coverage};
use crate::losses::{contrastive_flow_loss, masked_l1, sequence_loss, total_loss, LossConfig};
use crate::model::{build_pyramid, correlation_volume, forward, init_params, instance_norm, lookup, prepare_input, ModelConfig};
use crate::synth::{build_splits, SceneParams, SplitConfig, SplitSizes};
use crate::tape::{Tape, UnaryKind, Var};
use crate::tensor::Tensor;

pub const AUDIT_EPS: f64 = 1e-6;
pub const AUDIT_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct AuditEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub tolerance: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&AuditEntry> {
        self.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn lift(e: Error) -> TensorError {
    match e {
        Error::Tensor(t) => t,
        other => TensorError::InvalidArgument { op: "audit", reason: other.to_string() },
    }
}

struct Sweep {
    rng: ChaCha8Rng,
    entries: Vec<AuditEntry>,
}

impl Sweep {
    fn tensor(&mut self, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| self.rng.random_range(-1.0..1.0)).collect()).expect("sized")
    }

    fn check<F>(&mut self, name: &str, inputs: &[Tensor<f64>], f: F) -> Result<(), TensorError>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
    {
        let r = grad_check_inputs(f, inputs, AUDIT_EPS, Coverage::All)?;
        self.entries.push(AuditEntry { name: name.into(), max_rel_error: r.max_rel_error, checked: r.checked });
        Ok(())
    }

    /// Checks `op` composed with a fixed random projection to a scalar.
    fn projected<F>(&mut self, name: &str, inputs: &[Tensor<f64>], op: F) -> Result<(), TensorError>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
    {
        let probe = {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
            let y = op(&mut t, &vars)?;
            t.shape(y).to_vec()
        };
        let w = self.tensor(&probe);
        self.check(name, inputs, |t, v| {
            let y = op(t, v)?;
            let wv = t.constant(w.clone());
            let p = t.mul(y, wv)?;
            t.sum(p)
        })
    }
}

fn random_flow(rng: &mut ChaCha8Rng, w: usize, h: usize, max: f32) -> (FlowField, ValidityMask) {
    let mut f = FlowField::zeros(w, h);
    let mut m = ValidityMask::none_valid(w, h);
    for y in 0..h {
        for x in 0..w {
            f.set(x, y, rng.random_range(-max..max), rng.random_range(-max..max));
            m.set(x, y, rng.random_bool(0.8));
        }
    }
    (f, m)
}

fn builtin_ops(s: &mut Sweep) -> Result<(), TensorError> {
    let x = s.tensor(&[2, 3, 4]);
    for kind in UnaryKind::ALL {
        let input = match kind {
            UnaryKind::Log | UnaryKind::Sqrt => x.map(|v| v.abs() + 0.5),
            // keep clear of the kink
            UnaryKind::Relu => x.map(|v| if v.abs() < 1e-2 { 0.5 } else { v }),
            _ => x.clone(),
        };
        s.projected(kind.name(), &[input], |t, v| t.unary(kind, v[0]))?;
    }
    let b = s.tensor(&[2, 1, 4]).map(|v| v + 2.5);
    s.projected("add", &[x.clone(), b.clone()], |t, v| t.add(v[0], v[1]))?;
    s.projected("sub", &[x.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))?;
    s.projected("mul", &[x.clone(), b.clone()], |t, v| t.mul(v[0], v[1]))?;
    s.projected("div", &[x.clone(), b], |t, v| t.div(v[0], v[1]))?;
    s.projected("scale", &[x.clone()], |t, v| t.scale(v[0], 0.3))?;
    s.projected("add_scalar", &[x.clone()], |t, v| t.add_scalar(v[0], 0.3))?;
    s.projected("one_minus", &[x.clone()], |t, v| t.one_minus(v[0]))?;
    s.check("sum", &[x.clone()], |t, v| t.sum(v[0]))?;
    s.check("mean", &[x.clone()], |t, v| t.mean(v[0]))?;
    let (a, m) = (s.tensor(&[3, 5]), s.tensor(&[5, 4]));
    s.projected("matmul", &[a, m.clone()], |t, v| t.matmul(v[0], v[1]))?;
    s.projected("transpose", &[m], |t, v| t.transpose(v[0]))?;
    s.projected("reshape", &[x.clone()], |t, v| t.reshape(v[0], &[4, 6]))?;
    s.projected("slice", &[x.clone()], |t, v| t.slice(v[0], 1, 2))?;
    let y = s.tensor(&[1, 3, 4]);
    s.projected("concat", &[x.clone(), y], |t, v| t.concat(&[v[0], v[1]]))?;
    let (img, w, bias) = (s.tensor(&[2, 5, 5]), s.tensor(&[3, 2, 3, 3]), s.tensor(&[3]));
    s.projected("conv2d", &[img.clone(), w.clone(), bias.clone()], |t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1))?;
    s.projected("conv2d_stride2", &[img, w, bias], |t, v| t.conv2d(v[0], v[1], Some(v[2]), 2, 1))?;
    let p = s.tensor(&[2, 4, 6]);
    s.projected("avgpool2d", &[p], |t, v| t.avgpool2d(v[0], 2))?;
    let u = s.tensor(&[2, 3, 2]);
    s.projected("upsample_bilinear", &[u], |t, v| t.upsample_bilinear(v[0], 4, 4.0))?;
    Ok(())
}

fn network_ops(s: &mut Sweep) -> Result<(), TensorError> {
    let a = s.tensor(&[3, 4, 4]);
    s.projected("instance_norm", &[a], |t, v| instance_norm(t, v[0]))?;
    let (g1, g2) = (s.tensor(&[4, 4, 4]), s.tensor(&[4, 4, 4]));
    s.projected("correlation_volume", &[g1, g2], |t, v| correlation_volume(t, v[0], v[1], true))?;
    let volume = s.tensor(&[16, 4, 4]);
    // fractional offsets away from integer cells
    let flow = s.tensor(&[2, 4, 4]).map(|v| 1.7 * v + 0.31);
    s.projected("correlation_lookup", &[volume, flow], |t, v| {
        let levels = build_pyramid(t, v[0], 2)?;
        lookup(t, &levels, v[1], 1)
    })?;
    Ok(())
}

fn loss_ops(s: &mut Sweep) -> Result<(), TensorError> {
    let (gt, mask) = random_flow(&mut s.rng, 4, 4, 1.5);
    let pred = s.tensor(&[2, 4, 4]).map(|v| 2.0 * v);
    s.check("masked_l1", &[pred.clone()], |t, v| masked_l1(t, v[0], &gt, &mask).map_err(lift))?;
    let pred2 = s.tensor(&[2, 4, 4]);
    s.check("sequence_loss", &[pred, pred2], |t, v| sequence_loss(t, v, &gt, &mask, 0.8).map_err(lift))?;
    let (flow, mask) = random_flow(&mut s.rng, 8, 8, 3.0);
    let (g1, g2) = (s.tensor(&[6, 4, 4]), s.tensor(&[6, 4, 4]));
    for (name, normalize) in [("contrastive_flow_loss", false), ("contrastive_flow_loss_normalized", true)] {
        let cfg = LossConfig { normalize_features: normalize, ..LossConfig::default() };
        s.check(name, &[g1.clone(), g2.clone()], |t, v| {
            contrastive_flow_loss(t, v[0], v[1], &flow, &mask, 2, &cfg).map_err(lift)
        })?;
    }
    Ok(())
}

/// The tiny model of [`ModelConfig::tiny`] on a generated 16x16 pair,
/// differentiated through the full training loss with respect to every
/// parameter and both input frames.
fn tiny_model(s: &mut Sweep, seed: u64) -> Result<(), Error> {
    let model = ModelConfig::tiny();
    let scene = SceneParams { width: 16, height: 16, background_translation: 2.0, object_translation: 3.0, ..SceneParams::default() };
    let splits = build_splits(&SplitConfig {
        root_seed: seed,
        sizes: SplitSizes { source: 1, target_train: 1, target_unlabeled: 1, target_test: 1 },
        scene,
        ..SplitConfig::default()
    })?;
    let pair = &splits.source[0];
    let loss = LossConfig { temperature: 0.5, ..LossConfig::default() };
    // Zero biases put the first flow-encoder activations exactly on the
    // relu kink, so audit at a jittered point instead.
    let mut inputs: Vec<Tensor<f64>> = init_params(&model, seed).cast::<f64>().tensors;
    for t in &mut inputs {
        for v in t.data_mut() {
            *v += s.rng.random_range(-0.05..0.05);
        }
    }
    let np = inputs.len();
    inputs.push(prepare_input(&model, &pair.image1)?);
    inputs.push(prepare_input(&model, &pair.image2)?);
    s.check("tiny_model", &inputs, |t, v| {
        let out = forward(t, &model, &v[..np], v[np], v[np + 1]).map_err(lift)?;
        let terms =
            total_loss(t, &out.flows, &pair.flow, &pair.mask, out.features, model.stride, &loss).map_err(lift)?;
        Ok(terms.total)
    })?;
    Ok(())
}

/// Runs the full sweep. Fails only if a check cannot be evaluated; a
/// gradient mismatch shows up in the report.
pub fn grad_audit(seed: u64) -> Result<AuditReport, Error> {
    let mut s = Sweep { rng: ChaCha8Rng::seed_from_u64(seed), entries: Vec::new() };
    builtin_ops(&mut s)?;
    network_ops(&mut s)?;
    loss_ops(&mut s)?;
    tiny_model(&mut s, seed)?;
    Ok(AuditReport { entries: s.entries, tolerance: AUDIT_TOLERANCE })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_flags_the_worst_entry() {
        let r = AuditReport {
            entries: alloc::vec![
                AuditEntry { name: "a".into(), max_rel_error: 1e-9, checked: 3 },
                AuditEntry { name: "b".into(), max_rel_error: 2e-5, checked: 3 },
            ],
            tolerance: AUDIT_TOLERANCE,
        };
        assert!(!r.passed());
        assert_eq!(r.worst().unwrap().name, "b");
    }

    #[test]
    fn full_sweep_passes() {
        let r = grad_audit(0).unwrap();
        for e in &r.entries {
            std::println!("{:32} {:.3e} ({} checked)", e.name, e.max_rel_error, e.checked);
        }
        assert!(r.passed(), "{:?}", r.worst());
    }
}
