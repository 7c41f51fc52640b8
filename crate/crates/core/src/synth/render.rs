use alloc::vec::Vec;

use num_traits::Float;

use super::SceneSpec;
use crate::error::SynthError;
use crate::flow::{Domain, FlowField, Image, LabelKind, LabeledPair, ValidityMask};

/// Index of the front-most layer covering frame-1 position `p`.
fn owner_frame1(spec: &SceneSpec, p: (f64, f64)) -> usize {
    (0..spec.layers.len()).rev().find(|&i| spec.layers[i].shape.contains(spec.layers[i].center, p)).unwrap_or(0)
}

/// Front-most layer covering frame-2 position `q`, with its preimage.
fn owner_frame2(spec: &SceneSpec, q: (f64, f64)) -> (usize, (f64, f64)) {
    for i in (0..spec.layers.len()).rev() {
        let l = &spec.layers[i];
        let pre = l.motion.inverse(l.center, q);
        if l.shape.contains(l.center, pre) {
            return (i, pre);
        }
    }
    let l = &spec.layers[0];
    (0, l.motion.inverse(l.center, q))
}

/// Renders both frames and the exact flow of the front-most layer.
///
/// A pixel is valid when its displaced position lies inside frame 2 and every
/// frame-2 pixel contributing to a bilinear sample there shows the same
/// layer.
pub fn gen_pair(spec: &SceneSpec) -> Result<LabeledPair, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut image1 = Image::new(w, h, 3);
    let mut image2 = Image::new(w, h, 3);
    let mut owner2 = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = (x as f64, y as f64);
            let l1 = owner_frame1(spec, p);
            let c1 = spec.layers[l1].texture.color(p);
            let (l2, pre) = owner_frame2(spec, p);
            let c2 = spec.layers[l2].texture.color(pre);
            for c in 0..3 {
                image1.set(c, x, y, c1[c]);
                image2.set(c, x, y, c2[c]);
            }
            owner2.push(l2);
        }
    }

    let mut flow = FlowField::zeros(w, h);
    let mut mask = ValidityMask::none_valid(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = (x as f64, y as f64);
            let li = owner_frame1(spec, p);
            let layer = &spec.layers[li];
            let (u, v) = layer.motion.displacement(layer.center, p);
            let (u, v) = (u as f32, v as f32);
            flow.set(x, y, u, v);

            let (qx, qy) = (x as f32 + u, y as f32 + v);
            if !(qx >= 0.0 && qy >= 0.0 && qx <= (w - 1) as f32 && qy <= (h - 1) as f32) {
                continue;
            }
            let valid = !spec.occlusion || {
                let (x0, y0) = (Float::floor(qx) as usize, Float::floor(qy) as usize);
                let x1 = if qx > x0 as f32 { x0 + 1 } else { x0 };
                let y1 = if qy > y0 as f32 { y0 + 1 } else { y0 };
                [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].iter().all(|&(cx, cy)| owner2[cy * w + cx] == li)
            };
            mask.set(x, y, valid);
        }
    }
    LabeledPair::new(image1, image2, flow, mask, Domain::Source, LabelKind::GroundTruth)
        .map_err(|e| SynthError::Degenerate(alloc::format!("{e}")))
}
