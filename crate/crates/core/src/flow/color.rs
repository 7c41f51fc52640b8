//! Middlebury color-wheel rendering of flow fields.

use alloc::vec::Vec;
use core::f32::consts::PI;

use num_traits::Float;

use super::{FlowField, Image};

const SEGMENTS: [(usize, [u8; 3], [u8; 3]); 6] = [
    // (length, start color, end color)
    (15, [255, 0, 0], [255, 255, 0]),
    (6, [255, 255, 0], [0, 255, 0]),
    (4, [0, 255, 0], [0, 255, 255]),
    (11, [0, 255, 255], [0, 0, 255]),
    (13, [0, 0, 255], [255, 0, 255]),
    (6, [255, 0, 255], [255, 0, 0]),
];

fn wheel() -> Vec<[f32; 3]> {
    let mut cols = Vec::with_capacity(55);
    for (len, a, b) in SEGMENTS {
        for i in 0..len {
            let t = i as f32 / len as f32;
            let mut c = [0.0; 3];
            for k in 0..3 {
                let step = (255.0 * t).floor();
                c[k] = match a[k].cmp(&b[k]) {
                    core::cmp::Ordering::Less => step,
                    core::cmp::Ordering::Greater => 255.0 - step,
                    core::cmp::Ordering::Equal => a[k] as f32,
                } / 255.0;
            }
            cols.push(c);
        }
    }
    cols
}

/// Position of a direction on the wheel, in turns `[0, 1)`.
pub fn wheel_position(u: f32, v: f32) -> f32 {
    let a = Float::atan2(-v, -u) / PI; // (-1, 1]
    let p = (a + 1.0) / 2.0;
    if p >= 1.0 { p - 1.0 } else { p }
}

fn encode(wheel: &[[f32; 3]], u: f32, v: f32) -> [f32; 3] {
    let n = wheel.len();
    let rad = Float::sqrt(u * u + v * v);
    let fk = wheel_position(u, v) * n as f32;
    let k0 = (fk.floor() as usize) % n;
    let k1 = (k0 + 1) % n;
    let f = fk - fk.floor();
    let mut out = [0.0; 3];
    for c in 0..3 {
        let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        out[c] = if rad <= 1.0 { 1.0 - rad * (1.0 - col) } else { 0.75 * col };
    }
    out
}

/// Colors each pixel by direction (hue) and magnitude relative to
/// `max_mag` (saturation). Zero motion is white; magnitudes beyond
/// `max_mag` are darkened. Without `max_mag` the field's largest magnitude
/// is used.
pub fn flow_to_color(flow: &FlowField, max_mag: Option<f32>) -> Image {
    let (w, h) = (flow.width, flow.height);
    let max_mag = max_mag.unwrap_or_else(|| {
        (0..w * h)
            .map(|i| {
                let (u, v) = flow.get(i % w, i / w);
                Float::sqrt(u * u + v * v)
            })
            .filter(|m| m.is_finite())
            .fold(0.0f32, f32::max)
    });
    let scale = if max_mag > 0.0 { 1.0 / max_mag } else { 0.0 };
    let wheel = wheel();
    let mut img = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            let (u, v) = if u.is_finite() && v.is_finite() { (u * scale, v * scale) } else { (0.0, 0.0) };
            let rgb = encode(&wheel, u, v);
            for (c, val) in rgb.into_iter().enumerate() {
                img.set(c, x, y, val);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn saturation(img: &Image, x: usize, y: usize) -> f32 {
        let rgb = [img.get(0, x, y), img.get(1, x, y), img.get(2, x, y)];
        let max = rgb.iter().cloned().fold(f32::MIN, f32::max);
        let min = rgb.iter().cloned().fold(f32::MAX, f32::min);
        (max - min) / max
    }

    #[test]
    fn wheel_has_55_entries_with_a_saturated_channel() {
        let w = wheel();
        assert_eq!(w.len(), 55);
        for c in &w {
            assert_eq!(c.iter().cloned().fold(0.0, f32::max), 1.0);
        }
    }

    #[test]
    fn zero_flow_is_white() {
        let img = flow_to_color(&FlowField::zeros(3, 2), Some(5.0));
        assert!(img.data.iter().all(|&v| v == 1.0));
        let img = flow_to_color(&FlowField::zeros(3, 2), None);
        assert!(img.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negation_is_half_a_turn() {
        for &(u, v) in &[(1.0f32, 0.0f32), (0.3, -2.0), (-4.0, 1.5), (0.0, 1.0)] {
            let d = (wheel_position(u, v) - wheel_position(-u, -v)).abs();
            assert!((d - 0.5).abs() < 1e-6, "{u},{v}: {d}");
        }
    }

    #[test]
    fn halving_magnitude_halves_saturation() {
        let mut f = FlowField::zeros(4, 1);
        f.set(0, 0, 3.0, 1.0);
        f.set(1, 0, -2.0, 2.5);
        f.set(2, 0, 0.5, -3.5);
        f.set(3, 0, -1.0, -1.0);
        let mut half = f.clone();
        half.data.iter_mut().for_each(|v| *v *= 0.5);
        let a = flow_to_color(&f, Some(4.0));
        let b = flow_to_color(&half, Some(4.0));
        for x in 0..4 {
            let (sa, sb) = (saturation(&a, x, 0), saturation(&b, x, 0));
            assert!((sb - 0.5 * sa).abs() < 1e-5, "pixel {x}: {sa} vs {sb}");
        }
    }
}
