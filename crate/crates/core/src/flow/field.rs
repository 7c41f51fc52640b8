use alloc::vec;
use alloc::vec::Vec;

use crate::error::FlowError;

/// Planar multi-channel raster, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `[channels, height, width]`, row-major.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, FlowError> {
        if data.len() != width * height * channels {
            return Err(FlowError::Malformed(alloc::format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// Rectangular window `[x0, x0 + w) × [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        let mut out = Image::new(w, h, self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, x, y, self.get(c, x0 + x, y0 + y));
                }
            }
        }
        out
    }
}

/// Dense per-pixel displacement `(u, v)` in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// `[2, height, width]`: the `u` plane followed by the `v` plane.
    pub data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; 2 * width * height] }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let mut f = Self::zeros(width, height);
        let n = width * height;
        f.data[..n].fill(u);
        f.data[n..].fill(v);
        f
    }

    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Result<Self, FlowError> {
        if data.len() != 2 * width * height {
            return Err(FlowError::Malformed(alloc::format!(
                "{} values for a {width}x{height} flow field",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.data[i], self.data[self.width * self.height + i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = y * self.width + x;
        let n = self.width * self.height;
        self.data[i] = u;
        self.data[n + i] = v;
    }

    pub fn check_finite(&self) -> Result<(), FlowError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let p = i % (self.width * self.height);
                Err(FlowError::NonFinite { x: p % self.width, y: p / self.width })
            }
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> FlowField {
        let mut out = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = self.get(x0 + x, y0 + y);
                out.set(x, y, u, v);
            }
        }
        out
    }
}

/// Per-pixel validity of a flow label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl ValidityMask {
    pub fn all_valid(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn none_valid(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, valid: bool) {
        self.data[y * self.width + x] = valid;
    }

    /// Number of valid pixels (N_v).
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ValidityMask {
        let mut out = ValidityMask::none_valid(w, h);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, self.get(x0 + x, y0 + y));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Domain {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LabelKind {
    GroundTruth,
    Pseudo,
}

/// Two consecutive frames with a (ground-truth or pseudo) flow label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub image1: Image,
    pub image2: Image,
    pub flow: FlowField,
    pub mask: ValidityMask,
    pub domain: Domain,
    pub label: LabelKind,
}

impl LabeledPair {
    pub fn new(
        image1: Image,
        image2: Image,
        flow: FlowField,
        mask: ValidityMask,
        domain: Domain,
        label: LabelKind,
    ) -> Result<Self, FlowError> {
        let (w, h) = (image1.width, image1.height);
        for (ow, oh) in [
            (image2.width, image2.height),
            (flow.width, flow.height),
            (mask.width, mask.height),
        ] {
            if (ow, oh) != (w, h) {
                return Err(FlowError::DimensionMismatch(w, h, ow, oh));
            }
        }
        Ok(Self { image1, image2, flow, mask, domain, label })
    }

    pub fn width(&self) -> usize {
        self.image1.width
    }

    pub fn height(&self) -> usize {
        self.image1.height
    }
}

/// Frames without a visible label (the unlabeled target split).
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub image1: Image,
    pub image2: Image,
}
