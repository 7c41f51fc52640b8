use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::*;
use crate::gradcheck::grad_check;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape.to_vec(), data).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.next_u32() as f64 / u32::MAX as f64) * 2.0 - 1.0).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn add_is_componentwise() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[1.0, 2.0]));
    let b = tape.constant(t(&[2], &[3.0, 4.0]));
    let c = tape.add(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[4.0, 6.0]);
}

#[test]
fn mul_by_zero_annihilates_value_and_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[1.5, -2.0, 7.0]));
    let z = tape.constant(Tensor::zeros([3]));
    let y = tape.mul(x, z).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 0.0]);
}

#[test]
fn exp_at_origin() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[1], &[0.0]));
    let y = tape.exp(x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0]);
    assert_eq!(tape.grad(x).unwrap(), &[1.0]);
}

#[test]
fn broadcast_along_singleton_axes() {
    let mut tape = Tape::new();
    let a = tape.param(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let row = tape.param(t(&[1, 3], &[10.0, 20.0, 30.0]));
    let col = tape.param(t(&[2, 1], &[100.0, 200.0]));
    let ar = tape.add(a, row).unwrap();
    let arc = tape.add(ar, col).unwrap();
    assert_eq!(tape.value(arc).data(), &[111.0, 122.0, 133.0, 214.0, 225.0, 236.0]);
    let s = tape.sum(arc).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(row).unwrap(), &[2.0, 2.0, 2.0]);
    assert_eq!(tape.grad(col).unwrap(), &[3.0, 3.0]);
}

#[test]
fn rank_mismatch_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([3]));
    assert!(matches!(tape.add(a, b), Err(TensorError::ShapeMismatch { .. })));
    let c = tape.constant(Tensor::zeros([2, 2]));
    assert!(matches!(tape.mul(a, c), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn non_finite_output_is_an_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t(&[1], &[-1.0]));
    assert!(matches!(tape.log(x), Err(TensorError::NonFinite { op: "log" })));
    let big = tape.constant(t(&[1], &[1.0e6]));
    assert!(matches!(tape.exp(big), Err(TensorError::NonFinite { .. })));
}

#[test]
fn matmul_identity_and_dot() {
    let mut tape = Tape::new();
    let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let ib = tape.matmul(i, b).unwrap();
    assert_eq!(tape.value(ib), tape.value(b));

    let r = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let c = tape.constant(t(&[2, 1], &[3.0, 4.0]));
    let rc = tape.matmul(r, c).unwrap();
    assert_eq!(tape.value(rc).data(), &[11.0]);

    let bad = tape.matmul(b, b);
    assert!(matches!(bad, Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn matmul_sum_gradient_is_ones_times_b_transpose() {
    let a = random(&[3, 4], 1);
    let b = random(&[4, 2], 2);
    let mut tape = Tape::new();
    let av = tape.param(a.clone());
    let bv = tape.constant(b.clone());
    let c = tape.matmul(av, bv).unwrap();
    let s = tape.sum(c).unwrap();
    tape.backward(s).unwrap();
    let g = tape.grad(av).unwrap();
    for i in 0..3 {
        for k in 0..4 {
            let expect: f64 = (0..2).map(|j| b.data()[k * 2 + j]).sum();
            assert!((g[i * 4 + k] - expect).abs() < 1e-12);
        }
    }
    let err = grad_check(
        |tape, x| {
            let bv = tape.constant(b.clone());
            let c = tape.matmul(x, bv)?;
            tape.sum(c)
        },
        &a,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn pointwise_identity_conv_is_identity() {
    let x = random(&[3, 5, 4], 3);
    let mut w = Tensor::zeros([3, 3, 1, 1]);
    for c in 0..3 {
        w.data_mut()[c * 3 + c] = 1.0;
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(w);
    let y = tape.conv2d(xv, wv, None, 1, 0).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn ones_kernel_on_constant_image() {
    let c: f64 = 0.75;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full([1, 6, 6], c));
    let w = tape.constant(Tensor::full([1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 4, 4]);
    assert!(tape.value(y).data().iter().all(|&v| (v - 9.0 * c).abs() < 1e-12));
}

#[test]
fn conv_output_extent_formula() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros([2, 11, 9]));
    let w = tape.constant(Tensor::zeros([4, 2, 3, 3]));
    let y = tape.conv2d(x, w, None, 2, 1).unwrap();
    assert_eq!(tape.shape(y), &[4, (11 + 2 - 3) / 2 + 1, (9 + 2 - 3) / 2 + 1]);
    let huge = tape.constant(Tensor::zeros([1, 2, 12, 12]));
    assert!(tape.conv2d(x, huge, None, 1, 0).is_err());
}

#[test]
fn conv_gradients_match_central_differences() {
    let x = random(&[1, 5, 5], 4);
    let w = random(&[1, 1, 3, 3], 5);
    let b = random(&[1], 6);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let f = |tape: &mut Tape<f64>, v: &[Var]| {
            let y = tape.conv2d(v[0], v[1], Some(v[2]), stride, pad)?;
            let y2 = tape.square(y)?;
            tape.sum(y2)
        };
        let r = crate::gradcheck::grad_check_inputs(
            f,
            &[x.clone(), w.clone(), b.clone()],
            1e-6,
            crate::gradcheck::Coverage::All,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "stride {stride} pad {pad}: {r:?}");
    }
}

#[test]
fn avgpool_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(random(&[2, 4, 4], 7));
    let same = tape.avgpool2d(x, 1).unwrap();
    assert_eq!(tape.value(same), tape.value(x));

    let block = tape.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let p = tape.avgpool2d(block, 2).unwrap();
    assert_eq!(tape.value(p).data(), &[2.5]);

    let constant = tape.constant(Tensor::full([3, 8, 8], 0.3));
    let pc = tape.avgpool2d(constant, 4).unwrap();
    assert!(tape.value(pc).data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

    let odd = tape.constant(Tensor::zeros([1, 6, 6]));
    assert!(matches!(tape.avgpool2d(odd, 4), Err(TensorError::Indivisible { .. })));
}

#[test]
fn grad_check_closed_forms() {
    let x = t(&[2], &[1.0, 2.0]);
    let e = grad_check(|tape, x| tape.sum(x), &x, 1e-6).unwrap();
    assert!(e < 1e-9);

    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let sq = tape.square(v).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(v).unwrap(), &[2.0, 4.0]);
    let e = grad_check(
        |tape, x| {
            let sq = tape.square(x)?;
            tape.sum(sq)
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(e < 1e-8);
}

fn scalarize(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var, TensorError> {
    // random projection keeps every output coordinate in play
    let w = random(tape.shape(y), seed);
    let wv = tape.constant(w);
    let p = tape.mul(y, wv)?;
    tape.sum(p)
}

#[test]
fn every_builtin_op_passes_gradient_check() {
    let eps = 1e-6;
    let mut results: Vec<(&str, f64)> = Vec::new();
    let x = random(&[2, 3, 4], 10);
    for kind in UnaryKind::ALL {
        let input = match kind {
            UnaryKind::Log | UnaryKind::Sqrt => x.map(|v| v.abs() + 0.5),
            UnaryKind::Relu => x.map(|v| if v.abs() < 1e-3 { 0.5 } else { v }),
            _ => x.clone(),
        };
        let e = grad_check(
            |tape, v| {
                let y = tape.unary(kind, v)?;
                scalarize(tape, y, 11)
            },
            &input,
            eps,
        )
        .unwrap();
        results.push(("unary", e));
    }
    let b = random(&[2, 1, 4], 12).map(|v| v + 2.5);
    for op in 0..4 {
        let r = crate::gradcheck::grad_check_inputs(
            |tape, v| {
                let y = match op {
                    0 => tape.add(v[0], v[1])?,
                    1 => tape.sub(v[0], v[1])?,
                    2 => tape.mul(v[0], v[1])?,
                    _ => tape.div(v[0], v[1])?,
                };
                scalarize(tape, y, 13)
            },
            &[x.clone(), b.clone()],
            eps,
            crate::gradcheck::Coverage::All,
        )
        .unwrap();
        results.push(("binary", r.max_rel_error));
    }
    let m = random(&[6, 4], 14);
    let checks: Vec<(&str, f64)> = vec![
        ("scale", grad_check(|tp, v| { let y = tp.scale(v, 0.3)?; scalarize(tp, y, 1) }, &x, eps).unwrap()),
        ("add_scalar", grad_check(|tp, v| { let y = tp.add_scalar(v, 0.3)?; scalarize(tp, y, 1) }, &x, eps).unwrap()),
        ("mean", grad_check(|tp, v| tp.mean(v), &x, eps).unwrap()),
        ("transpose", grad_check(|tp, v| { let y = tp.transpose(v)?; scalarize(tp, y, 2) }, &m, eps).unwrap()),
        ("reshape", grad_check(|tp, v| { let y = tp.reshape(v, &[4, 6])?; scalarize(tp, y, 3) }, &x, eps).unwrap()),
        ("slice", grad_check(|tp, v| { let y = tp.slice(v, 1, 2)?; scalarize(tp, y, 4) }, &x, eps).unwrap()),
        ("concat", grad_check(|tp, v| { let y = tp.concat(&[v, v])?; scalarize(tp, y, 5) }, &x, eps).unwrap()),
        ("avgpool2d", grad_check(|tp, v| { let y = tp.avgpool2d(v, 2)?; scalarize(tp, y, 6) }, &random(&[2, 4, 6], 15), eps).unwrap()),
        ("upsample", grad_check(|tp, v| { let y = tp.upsample_bilinear(v, 4, 4.0)?; scalarize(tp, y, 7) }, &random(&[2, 3, 2], 16), eps).unwrap()),
    ];
    results.extend(checks);
    for (name, e) in results {
        assert!(e < 1e-5, "{name}: {e}");
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let x = random(&[4], 20);
    let grad_of = |which: u8| {
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let a = tape.square(v).unwrap();
        let la = tape.sum(a).unwrap();
        let b = tape.tanh(v).unwrap();
        let lb = tape.sum(b).unwrap();
        let loss = match which {
            0 => la,
            1 => lb,
            _ => tape.add(la, lb).unwrap(),
        };
        tape.backward(loss).unwrap();
        tape.grad(v).unwrap().to_vec()
    };
    let (ga, gb, gs) = (grad_of(0), grad_of(1), grad_of(2));
    for i in 0..4 {
        assert!((ga[i] + gb[i] - gs[i]).abs() < 1e-14);
    }
}

#[test]
fn forward_is_bit_identical_across_runs() {
    let run = || {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(random(&[3, 8, 8], 30).cast());
        let w = tape.constant(random(&[5, 3, 3, 3], 31).cast());
        let y = tape.conv2d(x, w, None, 2, 1).unwrap();
        let z = tape.tanh(y).unwrap();
        tape.value(z).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn detached_branch_gets_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    let d = tape.detach(x);
    let y = tape.mul(x, d).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 2.0]);
    assert!(tape.grad(d).is_none());
}

#[test]
fn backward_requires_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
}
