use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SynthError;

/// Canvas extents must be multiples of this, so every supported model
/// stride divides them.
pub const CANVAS_ALIGN: usize = 8;
pub const MIN_SCALE: f64 = 0.8;
pub const MAX_SCALE: f64 = 1.25;
pub const MAX_LAYERS: usize = 3;

/// Similarity motion about a center `c`: `p' = c + s R(theta) (p - c) + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Motion {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
    pub scale: f64,
}

impl Motion {
    pub const IDENTITY: Motion = Motion { tx: 0.0, ty: 0.0, theta: 0.0, scale: 1.0 };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Motion { tx, ty, ..Self::IDENTITY }
    }

    pub fn rotation(theta: f64) -> Self {
        Motion { theta, ..Self::IDENTITY }
    }

    /// `p' - p`, written so a pure translation yields `(tx, ty)` exactly.
    pub fn displacement(&self, center: (f64, f64), p: (f64, f64)) -> (f64, f64) {
        let (s, c) = Float::sin_cos(self.theta);
        let (dx, dy) = (p.0 - center.0, p.1 - center.1);
        let (a, b) = (self.scale * c - 1.0, self.scale * s);
        (self.tx + a * dx - b * dy, self.ty + b * dx + a * dy)
    }

    /// Preimage of `q` under the motion.
    pub fn inverse(&self, center: (f64, f64), q: (f64, f64)) -> (f64, f64) {
        let (s, c) = Float::sin_cos(self.theta);
        let (dx, dy) = ((q.0 - center.0 - self.tx) / self.scale, (q.1 - center.1 - self.ty) / self.scale);
        (center.0 + c * dx + s * dy, center.1 - s * dx + c * dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Shape {
    /// Unbounded; used for the background.
    Canvas,
    Ellipse { rx: f64, ry: f64, angle: f64 },
    Rect { half_w: f64, half_h: f64, angle: f64 },
}

impl Shape {
    pub fn contains(&self, center: (f64, f64), q: (f64, f64)) -> bool {
        let local = |angle: f64| {
            let (s, c) = Float::sin_cos(angle);
            let (dx, dy) = (q.0 - center.0, q.1 - center.1);
            (c * dx + s * dy, -s * dx + c * dy)
        };
        match *self {
            Shape::Canvas => true,
            Shape::Ellipse { rx, ry, angle } => {
                let (x, y) = local(angle);
                (x / rx) * (x / rx) + (y / ry) * (y / ry) <= 1.0
            }
            Shape::Rect { half_w, half_h, angle } => {
                let (x, y) = local(angle);
                x.abs() <= half_w && y.abs() <= half_h
            }
        }
    }

    fn degenerate(&self) -> bool {
        let bad = |v: f64| !(v.is_finite() && v >= 0.5);
        match *self {
            Shape::Canvas => false,
            Shape::Ellipse { rx, ry, .. } => bad(rx) || bad(ry),
            Shape::Rect { half_w, half_h, .. } => bad(half_w) || bad(half_h),
        }
    }
}

/// Multi-octave value noise mapped onto a two-color ramp.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Texture {
    pub seed: u64,
    pub octaves: u32,
    /// Lattice spacing of the coarsest octave, in pixels.
    pub cell: f64,
    pub contrast: f64,
    pub colors: [[f32; 3]; 2],
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = mix64(seed ^ mix64((octave as u64) << 48 ^ mix64(ix as u64 ^ mix64(iy as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

impl Texture {
    /// Noise value in `[0, 1]` at layer-local position `q`.
    pub fn noise(&self, q: (f64, f64)) -> f64 {
        let (mut total, mut norm, mut amp, mut cell) = (0.0, 0.0, 1.0, self.cell);
        for o in 0..self.octaves.max(1) {
            let (x, y) = (q.0 / cell, q.1 / cell);
            let (fx, fy) = (Float::floor(x), Float::floor(y));
            let (ix, iy) = (fx as i64, fy as i64);
            let (tx, ty) = (fade(x - fx), fade(y - fy));
            let v = |dx: i64, dy: i64| lattice(self.seed, o, ix + dx, iy + dy);
            let top = v(0, 0) + (v(1, 0) - v(0, 0)) * tx;
            let bottom = v(0, 1) + (v(1, 1) - v(0, 1)) * tx;
            total += amp * (top + (bottom - top) * ty);
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        total / norm
    }

    pub fn color(&self, q: (f64, f64)) -> [f32; 3] {
        // Summed octaves cluster near 0.5; stretch before applying contrast.
        let n = (0.5 + 2.0 * self.contrast * (self.noise(q) - 0.5)).clamp(0.0, 1.0) as f32;
        let [a, b] = self.colors;
        [a[0] + (b[0] - a[0]) * n, a[1] + (b[1] - a[1]) * n, a[2] + (b[2] - a[2]) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layer {
    pub shape: Shape,
    pub center: (f64, f64),
    pub motion: Motion,
    pub texture: Texture,
}

/// A fully specified scene; rendering is a pure function of it.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Back to front. The first layer must be [`Shape::Canvas`].
    pub layers: Vec<Layer>,
    /// Mark pixels whose target is covered by another layer in frame 2 as
    /// invalid. Disabling this is only useful for diagnostics.
    pub occlusion: bool,
}

/// Distribution of random scenes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    /// Upper bound on layers including the background, 1 to 3.
    pub max_layers: usize,
    /// Exact layer count instead of a uniform draw in `1..=max_layers`.
    pub fixed_layers: Option<usize>,
    pub background_translation: f64,
    pub object_translation: f64,
    pub max_rotation: f64,
    pub scale_range: (f64, f64),
    pub octaves: u32,
    pub cell_range: (f64, f64),
    pub contrast_range: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            max_layers: 3,
            fixed_layers: None,
            background_translation: 4.0,
            object_translation: 8.0,
            max_rotation: 0.08,
            scale_range: (0.93, 1.07),
            octaves: 3,
            cell_range: (8.0, 16.0),
            contrast_range: (0.7, 1.0),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 || self.width % CANVAS_ALIGN != 0 || self.height % CANVAS_ALIGN != 0 {
            return Err(SynthError::Indivisible { width: self.width, height: self.height, stride: CANVAS_ALIGN });
        }
        let layers_ok = (1..=MAX_LAYERS).contains(&self.max_layers)
            && self.fixed_layers.map_or(true, |n| (1..=MAX_LAYERS).contains(&n));
        let ranges_ok = [self.scale_range, self.cell_range, self.contrast_range]
            .iter()
            .all(|&(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi)
            && self.scale_range.0 >= MIN_SCALE
            && self.scale_range.1 <= MAX_SCALE
            && self.cell_range.0 > 0.0;
        let motion_ok = [self.background_translation, self.object_translation, self.max_rotation]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !(layers_ok && ranges_ok && motion_ok) {
            return Err(SynthError::Degenerate(alloc::format!("invalid scene parameters {self:?}")));
        }
        Ok(())
    }
}

fn range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sym(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    range(rng, (-max, max))
}

impl SceneSpec {
    /// Draws a scene from `params`; the same `(seed, params)` always gives the
    /// same scene.
    pub fn sample(seed: u64, params: &SceneParams) -> Result<SceneSpec, SynthError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (params.width as f64, params.height as f64);
        let count = params.fixed_layers.unwrap_or_else(|| rng.random_range(1..=params.max_layers));
        let texture = |rng: &mut ChaCha8Rng| {
            let mut colors = [[0.0f32; 3]; 2];
            for c in colors.iter_mut().flatten() {
                *c = rng.random_range(0.1f32..0.9);
            }
            Texture {
                seed: rng.next_u64(),
                octaves: params.octaves,
                cell: range(rng, params.cell_range),
                contrast: range(rng, params.contrast_range),
                colors,
            }
        };
        let motion = |rng: &mut ChaCha8Rng, translation: f64| Motion {
            tx: sym(rng, translation),
            ty: sym(rng, translation),
            theta: sym(rng, params.max_rotation),
            scale: range(rng, params.scale_range),
        };
        let mut layers = Vec::with_capacity(count);
        let bg_motion = motion(&mut rng, params.background_translation);
        layers.push(Layer {
            shape: Shape::Canvas,
            center: ((w - 1.0) / 2.0, (h - 1.0) / 2.0),
            motion: bg_motion,
            texture: texture(&mut rng),
        });
        let short = w.min(h);
        for _ in 1..count {
            let center = (range(&mut rng, (0.2 * w, 0.8 * w)), range(&mut rng, (0.2 * h, 0.8 * h)));
            let (a, b) = (range(&mut rng, (0.12 * short, 0.3 * short)), range(&mut rng, (0.12 * short, 0.3 * short)));
            let angle = sym(&mut rng, core::f64::consts::PI);
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse { rx: a, ry: b, angle }
            } else {
                Shape::Rect { half_w: a, half_h: b, angle }
            };
            let m = motion(&mut rng, params.object_translation);
            layers.push(Layer { shape, center, motion: m, texture: texture(&mut rng) });
        }
        Ok(SceneSpec { seed, width: params.width, height: params.height, layers, occlusion: true })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 || self.width % CANVAS_ALIGN != 0 || self.height % CANVAS_ALIGN != 0 {
            return Err(SynthError::Indivisible { width: self.width, height: self.height, stride: CANVAS_ALIGN });
        }
        match self.layers.first() {
            Some(l) if l.shape == Shape::Canvas => {}
            _ => return Err(SynthError::Degenerate("the first layer must cover the canvas".into())),
        }
        if self.layers.len() > MAX_LAYERS {
            return Err(SynthError::Degenerate(alloc::format!("{} layers (at most {MAX_LAYERS})", self.layers.len())));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let m = l.motion;
            let finite = [m.tx, m.ty, m.theta, l.center.0, l.center.1].iter().all(|v| v.is_finite());
            if l.shape.degenerate() || !finite || !(MIN_SCALE..=MAX_SCALE).contains(&m.scale) {
                return Err(SynthError::Degenerate(alloc::format!("layer {i}: {l:?}")));
            }
        }
        Ok(())
    }
}
