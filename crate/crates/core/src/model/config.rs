use crate::error::Error;

/// Architecture of the correlation-volume flow network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    /// Downsampling of the feature grid, 4 or 8.
    pub stride: usize,
    /// Channels of the matching features.
    pub feature_channels: usize,
    /// Width of the first encoder convolution; deeper ones double it once.
    pub encoder_width: usize,
    /// Recurrent state channels; the context features use as many.
    pub hidden_channels: usize,
    pub motion_channels: usize,
    /// Refinement steps per forward pass.
    pub iterations: usize,
    /// Lookup window radius in cells of each pyramid level.
    pub radius: usize,
    pub corr_levels: usize,
    /// Append normalized x/y coordinate channels to both input frames.
    pub coord_encoding: bool,
    /// Divide correlations by the square root of the channel count.
    pub scale_correlation: bool,
    /// Stop gradients through the flow estimate between refinement steps.
    pub detach_flow: bool,
    /// Normalize every hidden encoder activation per channel over space.
    pub instance_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stride: 8,
            feature_channels: 64,
            encoder_width: 16,
            hidden_channels: 32,
            motion_channels: 32,
            iterations: 8,
            radius: 3,
            corr_levels: 4,
            coord_encoding: false,
            scale_correlation: true,
            detach_flow: true,
            instance_norm: true,
        }
    }
}

impl ModelConfig {
    /// Stride 4, 16 feature channels, two refinement steps and three pyramid
    /// levels: small enough for exhaustive gradient checks on 16x16 inputs.
    pub fn tiny() -> Self {
        Self {
            stride: 4,
            feature_channels: 16,
            encoder_width: 8,
            hidden_channels: 8,
            motion_channels: 8,
            iterations: 2,
            radius: 1,
            corr_levels: 3,
            coord_encoding: true,
            scale_correlation: true,
            detach_flow: false,
            instance_norm: true,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(alloc::format!("model: {m}")));
        if self.stride != 4 && self.stride != 8 {
            return bad("stride must be 4 or 8");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.radius == 0 {
            return bad("radius must be at least 1");
        }
        if self.corr_levels == 0 || self.corr_levels > 6 {
            return bad("corr_levels must be in 1..=6");
        }
        if self.motion_channels < 3 {
            return bad("motion_channels must be at least 3");
        }
        if [self.feature_channels, self.encoder_width, self.hidden_channels].contains(&0) {
            return bad("channel counts must be positive");
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        if self.coord_encoding {
            5
        } else {
            3
        }
    }

    /// Stride-2 convolutions in each encoder.
    pub fn encoder_depth(&self) -> usize {
        self.stride.trailing_zeros() as usize
    }

    pub fn encoder_widths(&self) -> impl Iterator<Item = usize> + '_ {
        let w = self.encoder_width;
        (0..self.encoder_depth()).map(move |i| if i == 0 { w } else { w * (i + 1).min(3) })
    }

    pub fn lookup_channels(&self) -> usize {
        self.corr_levels * (2 * self.radius + 1) * (2 * self.radius + 1)
    }

    /// Input extents must be multiples of this.
    pub fn input_align(&self) -> usize {
        self.stride << (self.corr_levels - 1)
    }

    pub fn check_input(&self, width: usize, height: usize) -> Result<(), Error> {
        let a = self.input_align();
        if width == 0 || height == 0 || width % a != 0 || height % a != 0 {
            return Err(Error::Config(alloc::format!(
                "input {width}x{height} must be a positive multiple of {a} (stride {} with {} pyramid levels)",
                self.stride, self.corr_levels
            )));
        }
        Ok(())
    }
}
