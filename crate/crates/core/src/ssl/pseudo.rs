use alloc::vec::Vec;

use crate::error::{Error, TensorError};
use crate::flow::{sample_bilinear, Domain, FlowField, FramePair, LabelKind, LabeledPair, ValidityMask};
use crate::model::{predict, Checkpoint};
use crate::train::Executor;

const CONSISTENCY_REL: f32 = 0.01;
const CONSISTENCY_ABS: f32 = 0.5;

/// Pixels whose displaced position stays inside the frame.
pub fn in_frame_mask(flow: &FlowField) -> ValidityMask {
    let (w, h) = (flow.width, flow.height);
    let mut m = ValidityMask::none_valid(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let (tx, ty) = (x as f32 + u, y as f32 + v);
            m.set(x, y, tx >= 0.0 && ty >= 0.0 && tx <= (w - 1) as f32 && ty <= (h - 1) as f32);
        }
    }
    m
}

/// Forward-backward check: `forward + backward(x + forward)` must be small
/// relative to the motion. Pixels leaving the frame fail.
pub fn consistency_mask(forward: &FlowField, backward: &FlowField) -> ValidityMask {
    let (w, h) = (forward.width, forward.height);
    let n = w * h;
    let (bu, bv) = backward.data.split_at(n);
    let mut m = in_frame_mask(forward);
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let (u, v) = forward.get(x, y);
            let (px, py) = (x as f32 + u, y as f32 + v);
            let (ub, _) = sample_bilinear(bu, w, h, px, py);
            let (vb, _) = sample_bilinear(bv, w, h, px, py);
            let (du, dv) = (u + ub, v + vb);
            let lhs = du * du + dv * dv;
            let rhs = CONSISTENCY_REL * (u * u + v * v + ub * ub + vb * vb) + CONSISTENCY_ABS;
            m.set(x, y, lhs < rhs);
        }
    }
    m
}

/// Labels every unlabeled pair with the master's final estimate. The mask
/// keeps every in-frame pixel, or only consistent ones when `consistency`
/// is set.
pub fn generate_pseudo_labels<E: Executor>(
    exec: &E,
    master: &Checkpoint,
    pairs: &[FramePair],
    consistency: bool,
) -> Result<Vec<LabeledPair>, Error> {
    let cfg = &master.meta.model;
    let indexed: Vec<(usize, &FramePair)> = pairs.iter().enumerate().collect();
    let results = exec.map(&indexed, &|&(i, p)| {
        let fail = |e: Error| match e {
            Error::Tensor(source) => Error::Inference { pair: i, source },
            other => other,
        };
        let flow = predict(cfg, &master.params, &p.image1, &p.image2).map_err(fail)?;
        flow.check_finite()
            .map_err(|_| Error::Inference { pair: i, source: TensorError::NonFinite { op: "predict" } })?;
        let mask = if consistency {
            let back = predict(cfg, &master.params, &p.image2, &p.image1).map_err(fail)?;
            consistency_mask(&flow, &back)
        } else {
            in_frame_mask(&flow)
        };
        Ok::<_, Error>(LabeledPair::new(
            p.image1.clone(),
            p.image2.clone(),
            flow,
            mask,
            Domain::Target,
            LabelKind::Pseudo,
        )?)
    });
    results.into_iter().collect()
}
