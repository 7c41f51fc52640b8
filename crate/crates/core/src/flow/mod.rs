//! Flow fields, validity masks, metrics, warping, coloring and codecs.

mod codec;
mod color;
mod field;
mod metrics;
mod warp;

pub use codec::{
    decode_kitti, decode_kitti_value, decode_raw, encode_kitti, encode_raw, KITTI_MAX, KITTI_OFFSET, KITTI_SCALE,
    RAW_MAGIC,
};
pub use color::{flow_to_color, wheel_position};
pub use field::{Domain, FlowField, FramePair, Image, LabelKind, LabeledPair, ValidityMask};
pub use metrics::{epe, f1_all, FlowStats, PairErrors, OUTLIER_ABS_PX, OUTLIER_REL};
pub use warp::{sample_bilinear, warp_backward};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(w: usize, h: usize, vals: &[f32]) -> FlowField {
        FlowField::from_planar(w, h, vals[..2 * w * h].to_vec()).unwrap()
    }

    proptest! {
        #[test]
        fn metrics_ignore_invalid_pixels(
            w in 1usize..5, h in 1usize..5,
            p in proptest::collection::vec(-20f32..20., 32),
            g in proptest::collection::vec(-20f32..20., 32),
            noise in proptest::collection::vec(-100f32..100., 32),
            valid in proptest::collection::vec(any::<bool>(), 16),
        ) {
            let mut mask = ValidityMask::none_valid(w, h);
            for i in 0..w * h { mask.data[i] = valid[i]; }
            prop_assume!(mask.count() > 0);
            let (pred, gt) = (field(w, h, &p), field(w, h, &g));
            let (mut pred2, mut gt2) = (pred.clone(), gt.clone());
            let n = w * h;
            for i in 0..n {
                if !mask.data[i] {
                    pred2.data[i] += noise[i];
                    gt2.data[n + i] -= noise[16 + i];
                }
            }
            let e = epe(&pred, &gt, &mask).unwrap();
            let f = f1_all(&pred, &gt, &mask).unwrap();
            prop_assert_eq!(e, epe(&pred2, &gt2, &mask).unwrap());
            prop_assert_eq!(f, f1_all(&pred2, &gt2, &mask).unwrap());
            prop_assert!(e >= 0.0);
            prop_assert!((0.0..=100.0).contains(&f));
            prop_assert_eq!(epe(&gt, &gt, &mask).unwrap(), 0.0);
            prop_assert_eq!(f1_all(&gt, &gt, &mask).unwrap(), 0.0);
        }
    }
}
