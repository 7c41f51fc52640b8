use num_traits::Float;

use super::{FlowField, Image, ValidityMask};

/// Bilinear sample of one plane at `(x, y)`. Returns `None` when a corner
/// with non-zero weight lies outside the raster; the returned value is then
/// the edge-clamped sample.
#[inline]
pub fn sample_bilinear(plane: &[f32], width: usize, height: usize, x: f32, y: f32) -> (f32, bool) {
    let inside = x >= 0.0 && y >= 0.0 && x <= (width - 1) as f32 && y <= (height - 1) as f32;
    let xc = x.clamp(0.0, (width - 1) as f32);
    let yc = y.clamp(0.0, (height - 1) as f32);
    let x0 = Float::floor(xc) as usize;
    let y0 = Float::floor(yc) as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let at = |xx: usize, yy: usize| plane[yy * width + xx];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    (top * (1.0 - fy) + bottom * fy, inside)
}

/// Resamples `img` at `p + flow(p)` for every pixel `p`.
///
/// The mask marks samples whose bilinear footprint lies inside the raster.
/// Out-of-bounds samples are filled with the edge-clamped value, which is
/// only meaningful for display.
pub fn warp_backward(img: &Image, flow: &FlowField) -> (Image, ValidityMask) {
    let (w, h) = (img.width, img.height);
    assert_eq!((flow.width, flow.height), (w, h), "warp_backward: raster sizes differ");
    let mut out = Image::new(w, h, img.channels);
    let mut mask = ValidityMask::none_valid(w, h);
    if w == 0 || h == 0 {
        return (out, mask);
    }
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let (sx, sy) = (x as f32 + u, y as f32 + v);
            let mut ok = true;
            for c in 0..img.channels {
                let (val, inside) = sample_bilinear(img.plane(c), w, h, sx, sy);
                ok = inside;
                out.set(c, x, y, val);
            }
            mask.set(x, y, ok && sx.is_finite() && sy.is_finite());
        }
    }
    (out, mask)
}
