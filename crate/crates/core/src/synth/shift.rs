use alloc::vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::flow::{Domain, Image, LabeledPair};

/// Photometric degradation separating the target domain from the source.
///
/// Stages run in field order: palette swap, blur, gamma, brightness, noise,
/// then clipping to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DomainShift {
    /// Rotate color channels `(r, g, b) -> (g, b, r)`.
    pub palette_swap: bool,
    /// Box-blur radius in pixels.
    pub blur_radius: usize,
    pub gamma: f32,
    pub brightness: f32,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f32,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl DomainShift {
    pub const IDENTITY: DomainShift =
        DomainShift { palette_swap: false, blur_radius: 0, gamma: 1.0, brightness: 0.0, noise_sigma: 0.0 };

    /// The shift used for the target domain by default.
    pub fn target() -> Self {
        DomainShift { noise_sigma: 0.05, gamma: 1.3, ..Self::IDENTITY }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn validate(&self) -> Result<(), crate::error::SynthError> {
        let ok = self.noise_sigma.is_finite()
            && self.noise_sigma >= 0.0
            && self.gamma.is_finite()
            && self.gamma > 0.0
            && self.brightness.is_finite();
        if ok {
            Ok(())
        } else {
            Err(crate::error::SynthError::Degenerate(alloc::format!("invalid domain shift {self:?}")))
        }
    }

    pub fn apply_image(&self, img: &mut Image, rng: &mut ChaCha8Rng) {
        if self.palette_swap && img.channels == 3 {
            let n = img.width * img.height;
            img.data.rotate_left(n);
        }
        if self.blur_radius > 0 {
            box_blur(img, self.blur_radius);
        }
        if self.gamma != 1.0 {
            for v in img.data.iter_mut() {
                *v = Float::powf(v.max(0.0), self.gamma);
            }
        }
        if self.brightness != 0.0 {
            img.data.iter_mut().for_each(|v| *v += self.brightness);
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0f32, self.noise_sigma).expect("validated sigma");
            for v in img.data.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        img.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
}

fn box_blur(img: &mut Image, r: usize) {
    let (w, h) = (img.width, img.height);
    let norm = 1.0 / (2 * r + 1) as f32;
    let mut tmp = vec![0.0f32; w * h];
    for c in 0..img.channels {
        let plane = &mut img.data[c * w * h..(c + 1) * w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for k in 0..=2 * r {
                    let xx = (x + k).saturating_sub(r).min(w - 1);
                    s += plane[y * w + xx];
                }
                tmp[y * w + x] = s * norm;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for k in 0..=2 * r {
                    let yy = (y + k).saturating_sub(r).min(h - 1);
                    s += tmp[yy * w + x];
                }
                plane[y * w + x] = s * norm;
            }
        }
    }
}

/// Applies `shift` to both frames with independent noise; flow, mask and
/// label kind are untouched. The result is tagged as target domain.
pub fn apply_shift(pair: &LabeledPair, shift: &DomainShift, seed: u64) -> LabeledPair {
    let mut out = pair.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shift.apply_image(&mut out.image1, &mut rng);
    shift.apply_image(&mut out.image2, &mut rng);
    out.domain = Domain::Target;
    out
}
