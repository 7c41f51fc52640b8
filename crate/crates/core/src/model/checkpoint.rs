//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic "FPLCKPT\0" | version u32
//! model config: 8 x u32 (stride, feature, encoder, hidden, motion,
//!               iterations, radius, levels) | flags u32
//! contrastive weight f32 | step u64 | tag: u16 length + UTF-8
//! tensor count u32
//! per tensor: name (u16 length + UTF-8) | rank u8 | dims u32... | f32 data
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use super::{param_layout, ModelConfig, Params};
use crate::error::Error;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"FPLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLAG_COORD: u32 = 1;
const FLAG_SCALE: u32 = 2;
const FLAG_DETACH: u32 = 4;
const FLAG_NORM: u32 = 8;

/// Provenance stored next to the parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// Weight of the contrastive term the parameters were trained with.
    pub contrastive_weight: f32,
    pub step: u64,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Params<f32>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), Error> {
    let len = u16::try_from(s.len()).map_err(|_| bad("string longer than 65535 bytes"))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), Error> {
    let v = u32::try_from(v).map_err(|_| bad("value does not fit in u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>, Error> {
        let m = &self.meta.model;
        let layout = param_layout(m);
        if !self.params.matches(&layout) {
            return Err(bad("parameters do not match the model configuration"));
        }
        let mut out = Vec::with_capacity(64 + 4 * self.params.numel());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            m.stride,
            m.feature_channels,
            m.encoder_width,
            m.hidden_channels,
            m.motion_channels,
            m.iterations,
            m.radius,
            m.corr_levels,
        ] {
            put_u32(&mut out, v)?;
        }
        let flags = (m.coord_encoding as u32 * FLAG_COORD)
            | (m.scale_correlation as u32 * FLAG_SCALE)
            | (m.detach_flow as u32 * FLAG_DETACH)
            | (m.instance_norm as u32 * FLAG_NORM);
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&self.meta.contrastive_weight.to_le_bytes());
        out.extend_from_slice(&self.meta.step.to_le_bytes());
        put_str(&mut out, &self.meta.tag)?;
        put_u32(&mut out, layout.len())?;
        for (spec, t) in layout.iter().zip(&self.params.tensors) {
            put_str(&mut out, &spec.name)?;
            out.push(t.ndim() as u8);
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, Error> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(alloc::format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 8];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let flags = r.u32()?;
        if flags & !(FLAG_COORD | FLAG_SCALE | FLAG_DETACH | FLAG_NORM) != 0 {
            return Err(bad(alloc::format!("unknown flags {flags:#x}")));
        }
        let model = ModelConfig {
            stride: dims[0],
            feature_channels: dims[1],
            encoder_width: dims[2],
            hidden_channels: dims[3],
            motion_channels: dims[4],
            iterations: dims[5],
            radius: dims[6],
            corr_levels: dims[7],
            coord_encoding: flags & FLAG_COORD != 0,
            scale_correlation: flags & FLAG_SCALE != 0,
            detach_flow: flags & FLAG_DETACH != 0,
            instance_norm: flags & FLAG_NORM != 0,
        };
        model.validate().map_err(|e| bad(alloc::format!("{e}")))?;
        let contrastive_weight = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let tag = r.string()?;
        let layout = param_layout(&model);
        let count = r.u32()? as usize;
        if count != layout.len() {
            return Err(bad(alloc::format!("{count} tensors, configuration needs {}", layout.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for spec in &layout {
            let name = r.string()?;
            if name != spec.name {
                return Err(bad(alloc::format!("expected tensor {}, found {name}", spec.name)));
            }
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
            if shape != spec.shape {
                return Err(bad(alloc::format!("tensor {name} has shape {shape:?}, expected {:?}", spec.shape)));
            }
            let raw = r.take(4 * spec.numel())?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad(alloc::format!("tensor {name} holds non-finite values")));
            }
            tensors.push(Tensor::new(shape, data)?);
        }
        if r.at != bytes.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint { meta: CheckpointMeta { model, contrastive_weight, step, tag }, params: Params { tensors } })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, Error> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        let raw = self.take(len)?;
        core::str::from_utf8(raw).map(String::from).map_err(|_| bad("string is not UTF-8"))
    }
}
