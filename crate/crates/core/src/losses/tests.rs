use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::flow::{FlowField, ValidityMask};
use crate::gradcheck::{grad_check_inputs, Coverage};
use crate::tape::Tape;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(tau: f64, normalize: bool) -> LossConfig {
    LossConfig { temperature: tau, normalize_features: normalize, ..LossConfig::default() }
}

/// Per-pixel double loop straight from the definition.
fn naive_contrastive(
    g1: &Tensor<f64>,
    g2: &Tensor<f64>,
    flow: &FlowField,
    mask: &ValidityMask,
    stride: usize,
    tau: f64,
) -> Option<f64> {
    let (c, h, w) = (g1.shape()[0], g1.shape()[1], g1.shape()[2]);
    let at = |g: &Tensor<f64>, k: usize, x: usize, y: usize| g.data()[(k * h + y) * w + x];
    let (mut total, mut count) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x * stride, y * stride) {
                continue;
            }
            let (u, v) = flow.get(x * stride, y * stride);
            let jx = x as f64 + u as f64 / stride as f64;
            let jy = y as f64 + v as f64 / stride as f64;
            if jx < 0.0 || jy < 0.0 || jx > (w - 1) as f64 || jy > (h - 1) as f64 {
                continue;
            }
            let (x0, y0) = (jx.floor() as usize, jy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (jx - x0 as f64, jy - y0 as f64);
            let mut pos = 0.0;
            for k in 0..c {
                let key = at(g2, k, x0, y0) * (1.0 - fx) * (1.0 - fy)
                    + at(g2, k, x1, y0) * fx * (1.0 - fy)
                    + at(g2, k, x0, y1) * (1.0 - fx) * fy
                    + at(g2, k, x1, y1) * fx * fy;
                pos += at(g1, k, x, y) * key;
            }
            let (nx, ny) = (jx.round() as usize, jy.round() as usize);
            let mut denom = (pos / tau).exp();
            for ky in 0..h {
                for kx in 0..w {
                    if (kx, ky) == (nx, ny) {
                        continue;
                    }
                    let s: f64 = (0..c).map(|k| at(g1, k, x, y) * at(g2, k, kx, ky)).sum();
                    denom += (s / tau).exp();
                }
            }
            total += -((pos / tau).exp() / denom).ln();
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn random_flow(rng: &mut ChaCha8Rng, w: usize, h: usize, max: f32) -> (FlowField, ValidityMask) {
    let mut f = FlowField::zeros(w, h);
    let mut m = ValidityMask::none_valid(w, h);
    for y in 0..h {
        for x in 0..w {
            f.set(x, y, rng.random_range(-max..max), rng.random_range(-max..max));
            m.set(x, y, rng.random_bool(0.85));
        }
    }
    (f, m)
}

fn matrix_form(g1: &Tensor<f64>, g2: &Tensor<f64>, flow: &FlowField, mask: &ValidityMask, stride: usize, c: &LossConfig) -> Result<f64, crate::Error> {
    let mut tape = Tape::<f64>::new();
    let (a, b) = (tape.constant(g1.clone()), tape.constant(g2.clone()));
    let l = contrastive_flow_loss(&mut tape, a, b, flow, mask, stride, c)?;
    Ok(tape.value(l).data()[0])
}

#[test]
fn matrix_form_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    while compared < 50 {
        let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let ch = rng.random_range(1..=8);
        let stride = [1usize, 2, 4][rng.random_range(0..3)];
        let tau = [0.07, 0.5, 1.0][compared % 3];
        let g1 = random_tensor(&mut rng, &[ch, h, w], 1.0);
        let g2 = random_tensor(&mut rng, &[ch, h, w], 1.0);
        let (flow, mask) = random_flow(&mut rng, w * stride, h * stride, 1.5 * stride as f32);
        let Some(expect) = naive_contrastive(&g1, &g2, &flow, &mask, stride, tau) else { continue };
        let got = matrix_form(&g1, &g2, &flow, &mask, stride, &cfg(tau, false)).unwrap();
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
        compared += 1;
    }
}

#[test]
fn single_position_has_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g1 = random_tensor(&mut rng, &[4, 1, 1], 1.0);
    let g2 = random_tensor(&mut rng, &[4, 1, 1], 1.0);
    let l = matrix_form(&g1, &g2, &FlowField::zeros(1, 1), &ValidityMask::all_valid(1, 1), 1, &cfg(0.07, false));
    assert_eq!(l.unwrap(), 0.0);
}

#[test]
fn identical_features_give_log_m() {
    for (h, w) in [(2usize, 2usize), (1, 3), (4, 4), (3, 2)] {
        let g = Tensor::full([8, h, w], 0.3);
        let m = (h * w) as f64;
        for tau in [0.07, 1.0] {
            let l = matrix_form(&g, &g, &FlowField::zeros(w, h), &ValidityMask::all_valid(w, h), 1, &cfg(tau, false)).unwrap();
            assert!((l - m.ln()).abs() < 1e-12, "{h}x{w}: {l}");
        }
    }
}

#[test]
fn loss_is_non_negative_and_needs_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let g1 = random_tensor(&mut rng, &[3, 3, 3], 2.0);
        let g2 = random_tensor(&mut rng, &[3, 3, 3], 2.0);
        let (flow, mask) = random_flow(&mut rng, 3, 3, 1.0);
        if let Ok(l) = matrix_form(&g1, &g2, &flow, &mask, 1, &cfg(0.5, true)) {
            assert!(l >= 0.0);
        }
    }
    let g = Tensor::full([2, 2, 2], 1.0);
    let empty = matrix_form(&g, &g, &FlowField::zeros(2, 2), &ValidityMask::none_valid(2, 2), 1, &cfg(0.1, false));
    assert!(matches!(empty, Err(crate::Error::Flow(crate::FlowError::EmptyMask))));
    let outside = matrix_form(&g, &g, &FlowField::constant(2, 2, 5.0, 0.0), &ValidityMask::all_valid(2, 2), 1, &cfg(0.1, false));
    assert!(outside.is_err());
    let bad_tau = matrix_form(&g, &g, &FlowField::zeros(2, 2), &ValidityMask::all_valid(2, 2), 1, &cfg(0.0, false));
    assert!(matches!(bad_tau, Err(crate::Error::Config(_))));
}

#[test]
fn negatives_are_permutation_invariant() {
    // Zero flow, single valid query at cell 0: permuting the other key cells
    // of g2 leaves the loss unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g1 = random_tensor(&mut rng, &[5, 2, 3], 1.0);
    let g2 = random_tensor(&mut rng, &[5, 2, 3], 1.0);
    let mut mask = ValidityMask::none_valid(3, 2);
    mask.set(0, 0, true);
    let flow = FlowField::zeros(3, 2);
    let base = matrix_form(&g1, &g2, &flow, &mask, 1, &cfg(0.5, false)).unwrap();
    let perm = [0usize, 4, 5, 2, 1, 3];
    let mut shuffled = g2.clone();
    for k in 0..5 {
        for (dst, &src) in perm.iter().enumerate() {
            shuffled.data_mut()[k * 6 + dst] = g2.data()[k * 6 + src];
        }
    }
    let permuted = matrix_form(&g1, &shuffled, &flow, &mask, 1, &cfg(0.5, false)).unwrap();
    assert!((base - permuted).abs() < 1e-14);
}

#[test]
fn sharpening_does_not_increase_loss_when_positive_dominates() {
    // Orthonormal keys with matching queries: the positive logit is 1 and
    // every negative is 0.
    let mut g = Tensor::zeros([4, 2, 2]);
    for i in 0..4 {
        g.data_mut()[i * 4 + i] = 1.0;
    }
    let (flow, mask) = (FlowField::zeros(2, 2), ValidityMask::all_valid(2, 2));
    let mut prev = f64::INFINITY;
    for tau in [2.0, 1.0, 0.5, 0.2, 0.07] {
        let l = matrix_form(&g, &g, &flow, &mask, 1, &cfg(tau, false)).unwrap();
        assert!(l <= prev, "tau {tau}: {l} > {prev}");
        prev = l;
    }
}

#[test]
fn contrastive_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for normalize in [false, true] {
        let g1 = random_tensor(&mut rng, &[4, 3, 3], 1.0);
        let g2 = random_tensor(&mut rng, &[4, 3, 3], 1.0);
        let (flow, mask) = random_flow(&mut rng, 6, 6, 1.7);
        let c = cfg(0.5, normalize);
        let report = grad_check_inputs(
            |tape, v| Ok(contrastive_flow_loss(tape, v[0], v[1], &flow, &mask, 2, &c).map_err(|e| match e {
                crate::Error::Tensor(t) => t,
                other => panic!("{other}"),
            })?),
            &[g1, g2],
            1e-6,
            Coverage::All,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-7, "normalize {normalize}: {report:?}");
    }
}

#[test]
fn query_cap_subsamples() {
    let (flow, mask) = (FlowField::zeros(8, 8), ValidityMask::all_valid(8, 8));
    assert_eq!(contrastive_queries(&flow, &mask, 8, 8, 1, 0).unwrap().len(), 64);
    assert_eq!(contrastive_queries(&flow, &mask, 8, 8, 1, 16).unwrap().len(), 16);
}

fn two_step(e1: f32, e2: f32) -> (Tape<f64>, Vec<crate::tape::Var>, FlowField, ValidityMask) {
    let mut tape = Tape::<f64>::new();
    let gt = FlowField::constant(2, 1, 1.0, -1.0);
    // each pixel error split evenly over u and v
    let f1 = tape.constant(Tensor::new([2, 1, 2], vec![1.0 + e1 as f64 / 2.0, 1.0 - e1 as f64 / 2.0, -1.0 + e1 as f64 / 2.0, -1.0 - e1 as f64 / 2.0]).unwrap());
    let f2 = tape.constant(Tensor::new([2, 1, 2], vec![1.0 + e2 as f64 / 2.0, 1.0 + e2 as f64 / 2.0, -1.0 - e2 as f64 / 2.0, -1.0 - e2 as f64 / 2.0]).unwrap());
    (tape, vec![f1, f2], gt, ValidityMask::all_valid(2, 1))
}

#[test]
fn sequence_loss_weights() {
    let (mut tape, flows, gt, mask) = two_step(3.0, 5.0);
    let single = sequence_loss(&mut tape, &flows[..1], &gt, &mask, 0.5).unwrap();
    assert_eq!(tape.value(single).data()[0], 3.0);
    let both = sequence_loss(&mut tape, &flows, &gt, &mask, 0.5).unwrap();
    assert_eq!(tape.value(both).data()[0], 0.5 * 3.0 + 5.0);
    let (mut tape, flows, gt, mask) = two_step(0.0, 0.0);
    let zero = sequence_loss(&mut tape, &flows, &gt, &mask, 0.8).unwrap();
    assert_eq!(tape.value(zero).data()[0], 0.0);
    assert!(sequence_loss(&mut tape, &[], &gt, &mask, 0.8).is_err());
    assert!(sequence_loss(&mut tape, &flows, &gt, &ValidityMask::none_valid(2, 1), 0.8).is_err());
}

#[test]
fn sequence_loss_ignores_invalid_pixels() {
    let mut tape = Tape::<f64>::new();
    let gt = FlowField::zeros(2, 1);
    let mut mask = ValidityMask::all_valid(2, 1);
    mask.set(1, 0, false);
    let f = tape.param(Tensor::new([2, 1, 2], vec![1.0, 100.0, -2.0, 7.0]).unwrap());
    let l = sequence_loss(&mut tape, &[f], &gt, &mask, 0.8).unwrap();
    assert_eq!(tape.value(l).data()[0], 3.0);
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(f).unwrap(), &[1.0, 0.0, -1.0, 0.0]);
}

#[test]
fn total_loss_combines_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g1 = random_tensor(&mut rng, &[4, 2, 2], 1.0);
    let g2 = random_tensor(&mut rng, &[4, 2, 2], 1.0);
    let (gt, mask) = (FlowField::constant(4, 4, 0.5, -0.25), ValidityMask::all_valid(4, 4));
    let f = random_tensor(&mut rng, &[2, 4, 4], 2.0);
    let eval = |weight: f64| {
        let mut tape = Tape::<f64>::new();
        let fv = tape.constant(f.clone());
        let (a, b) = (tape.constant(g1.clone()), tape.constant(g2.clone()));
        let c = LossConfig { contrastive_weight: weight, temperature: 0.5, ..LossConfig::default() };
        let terms = total_loss(&mut tape, &[fv], &gt, &mask, (a, b), 2, &c).unwrap();
        let v = |x: crate::tape::Var| tape.value(x).data()[0];
        (v(terms.total), v(terms.sequence), terms.contrastive.map(v))
    };
    let (t0, s0, c0) = eval(0.0);
    assert_eq!(t0, s0);
    assert!(c0.is_none());
    let (t1, s1, c1) = eval(1.0);
    assert_eq!(t1, s1 + c1.unwrap());
}
