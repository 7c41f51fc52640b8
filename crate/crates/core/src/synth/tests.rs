use super::*;
use crate::flow::{warp_backward, Image, LabeledPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_layer(motion: Motion) -> SceneSpec {
    let mut spec = SceneSpec::sample(7, &SceneParams { fixed_layers: Some(1), ..SceneParams::default() }).unwrap();
    spec.layers[0].motion = motion;
    spec
}

fn photometric_error(pair: &LabeledPair) -> Option<f64> {
    let (warped, inb) = warp_backward(&pair.image2, &pair.flow);
    let (mut sum, mut n) = (0.0f64, 0usize);
    for y in 0..pair.height() {
        for x in 0..pair.width() {
            if pair.mask.get(x, y) && inb.get(x, y) {
                for c in 0..3 {
                    sum += (warped.get(c, x, y) - pair.image1.get(c, x, y)).abs() as f64;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[test]
fn translation_gives_constant_flow() {
    let pair = gen_pair(&one_layer(Motion::translation(2.75, -1.5))).unwrap();
    for y in 0..64 {
        for x in 0..64 {
            assert_eq!(pair.flow.get(x, y), (2.75, -1.5));
        }
    }
    // Pixels that leave the frame are invalid, the rest valid.
    assert!(!pair.mask.get(62, 10));
    assert!(!pair.mask.get(10, 0));
    assert!(pair.mask.get(10, 10));
}

#[test]
fn rotation_matches_closed_form_at_corners() {
    let theta = 0.05f64;
    let spec = one_layer(Motion::rotation(theta));
    let c = spec.layers[0].center;
    let pair = gen_pair(&spec).unwrap();
    for (x, y) in [(0usize, 0usize), (63, 0), (0, 63), (63, 63)] {
        let (dx, dy) = (x as f64 - c.0, y as f64 - c.1);
        let (s, co) = theta.sin_cos();
        let expect = (co * dx - s * dy - dx, s * dx + co * dy - dy);
        let (u, v) = pair.flow.get(x, y);
        assert!((u as f64 - expect.0).abs() < 1e-5 && (v as f64 - expect.1).abs() < 1e-5);
    }
}

#[test]
fn motion_inverse_round_trips() {
    let m = Motion { tx: 1.3, ty: -2.1, theta: 0.07, scale: 1.1 };
    let c = (10.0, 20.0);
    let p = (3.5, 40.25);
    let d = m.displacement(c, p);
    let back = m.inverse(c, (p.0 + d.0, p.1 + d.1));
    assert!((back.0 - p.0).abs() < 1e-12 && (back.1 - p.1).abs() < 1e-12);
}

#[test]
fn warp_with_ground_truth_reconstructs_frame_one() {
    let params = SceneParams::default();
    for seed in 0..20 {
        let pair = gen_pair(&SceneSpec::sample(seed, &params).unwrap()).unwrap();
        let err = photometric_error(&pair).unwrap();
        assert!(err < 0.02, "seed {seed}: {err}");
    }
}

#[test]
fn regeneration_is_bit_identical() {
    let params = SceneParams::default();
    let a = gen_pair(&SceneSpec::sample(99, &params).unwrap()).unwrap();
    let b = gen_pair(&SceneSpec::sample(99, &params).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_specs_are_rejected() {
    let mut spec = SceneSpec::sample(3, &SceneParams { fixed_layers: Some(2), ..SceneParams::default() }).unwrap();
    spec.layers[1].shape = Shape::Ellipse { rx: 0.0, ry: 4.0, angle: 0.0 };
    assert!(matches!(gen_pair(&spec), Err(crate::SynthError::Degenerate(_))));

    let mut spec = one_layer(Motion::IDENTITY);
    spec.width = 60;
    assert!(matches!(gen_pair(&spec), Err(crate::SynthError::Indivisible { .. })));

    let spec = one_layer(Motion { scale: 1.5, ..Motion::IDENTITY });
    assert!(gen_pair(&spec).is_err());
}

#[test]
fn occlusion_grows_with_layers_and_motion() {
    fn occluded_fraction(params: &SceneParams) -> f64 {
        let (mut occ, mut total) = (0usize, 0usize);
        for seed in 0..60 {
            let mut spec = SceneSpec::sample(1000 + seed, params).unwrap();
            let with = gen_pair(&spec).unwrap();
            spec.occlusion = false;
            let without = gen_pair(&spec).unwrap();
            occ += without.mask.count() - with.mask.count();
            total += with.mask.data.len();
        }
        occ as f64 / total as f64
    }
    let base = SceneParams { background_translation: 2.0, ..SceneParams::default() };
    let by_layers: Vec<f64> =
        (1..=3).map(|n| occluded_fraction(&SceneParams { fixed_layers: Some(n), ..base.clone() })).collect();
    assert_eq!(by_layers[0], 0.0);
    assert!(by_layers[0] < by_layers[1] && by_layers[1] < by_layers[2], "{by_layers:?}");
    let by_motion: Vec<f64> = [2.0, 5.0, 10.0]
        .iter()
        .map(|&t| occluded_fraction(&SceneParams { fixed_layers: Some(3), object_translation: t, ..base.clone() }))
        .collect();
    assert!(by_motion[0] < by_motion[1] && by_motion[1] < by_motion[2], "{by_motion:?}");
}

#[test]
fn identity_shift_leaves_images_unchanged() {
    let pair = gen_pair(&SceneSpec::sample(5, &SceneParams::default()).unwrap()).unwrap();
    let out = apply_shift(&pair, &DomainShift::IDENTITY, 11);
    assert_eq!(out.image1, pair.image1);
    assert_eq!(out.image2, pair.image2);
}

#[test]
fn shift_never_touches_labels() {
    let pair = gen_pair(&SceneSpec::sample(5, &SceneParams::default()).unwrap()).unwrap();
    let shift = DomainShift { palette_swap: true, blur_radius: 1, gamma: 1.3, brightness: 0.05, noise_sigma: 0.05 };
    let out = apply_shift(&pair, &shift, 11);
    assert_eq!(out.flow, pair.flow);
    assert_eq!(out.mask, pair.mask);
    assert!(out.image1.data.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_ne!(out.image1, pair.image1);
}

#[test]
fn noise_matches_folded_normal_mean() {
    let sigma = 0.05f32;
    let mut img = Image::new(64, 64, 3);
    img.data.fill(0.5);
    let orig = img.clone();
    let shift = DomainShift { noise_sigma: sigma, ..DomainShift::IDENTITY };
    shift.apply_image(&mut img, &mut ChaCha8Rng::seed_from_u64(1));
    let mad: f64 =
        img.data.iter().zip(&orig.data).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / img.data.len() as f64;
    let expect = sigma as f64 * (2.0 / core::f64::consts::PI).sqrt();
    assert!((mad / expect - 1.0).abs() < 0.1, "{mad} vs {expect}");
}

#[test]
fn frames_get_independent_noise() {
    let mut pair = gen_pair(&SceneSpec::sample(5, &SceneParams::default()).unwrap()).unwrap();
    pair.image2 = pair.image1.clone();
    let out = apply_shift(&pair, &DomainShift { noise_sigma: 0.05, ..DomainShift::IDENTITY }, 3);
    assert_ne!(out.image1, out.image2);
}

fn small_config(root_seed: u64) -> SplitConfig {
    SplitConfig {
        root_seed,
        sizes: SplitSizes { source: 6, target_train: 10, target_unlabeled: 5, target_test: 4 },
        scene: SceneParams { width: 32, height: 32, ..SceneParams::default() },
        ..SplitConfig::default()
    }
}

#[test]
fn splits_are_deterministic_and_disjoint() {
    let a = build_splits(&small_config(42)).unwrap();
    let b = build_splits(&small_config(42)).unwrap();
    assert_eq!(a, b);
    let mut all: Vec<u64> = SplitRole::ALL.iter().flat_map(|&r| a.seeds.get(r).to_vec()).collect();
    let n = all.len();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), n);
    assert_eq!(a.source.len(), 6);
    assert_eq!(a.target_unlabeled.len(), 5);
    assert!(a.source.iter().all(|p| p.domain == crate::flow::Domain::Source));
    assert!(a.target_test.iter().all(|p| p.domain == crate::flow::Domain::Target));
    let hidden = a.unlabeled_ground_truth(2).unwrap();
    assert_eq!(hidden.image1, a.target_unlabeled[2].image1);
    assert_ne!(build_splits(&small_config(43)).unwrap().seeds, a.seeds);
}

#[test]
fn default_sizes_and_empty_split_error() {
    let s = SplitSizes::default();
    assert_eq!((s.source, s.target_train, s.target_unlabeled, s.target_test), (500, 50, 500, 100));
    let mut cfg = small_config(1);
    cfg.sizes.target_test = 0;
    assert!(matches!(build_splits(&cfg), Err(crate::SynthError::InvalidSizes(_))));
}

