//! Flow serialization: KITTI 16-bit quantization and a lossless raw format.
//!
//! The KITTI layout is three interleaved 16-bit channels per pixel,
//! `(u, v, valid)`, with `stored = round(f * 64 + 32768)`. PNG framing is
//! done by the caller.
//!
//! The raw layout is the 8-byte magic, width and height as little-endian
//! `u32`, then `(u, v)` as little-endian `f32` per pixel in row-major order.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use super::{FlowField, ValidityMask};
use crate::error::FlowError;

pub const KITTI_SCALE: f32 = 64.0;
pub const KITTI_OFFSET: f32 = 32768.0;
/// Exclusive bound on the magnitude of each exported component.
pub const KITTI_MAX: f32 = 512.0;

pub const RAW_MAGIC: [u8; 8] = *b"FPLFLOW1";
const RAW_HEADER: usize = 16;

/// Quantizes to interleaved `(u, v, valid)` samples.
pub fn encode_kitti(flow: &FlowField, mask: &ValidityMask) -> Result<Vec<u16>, FlowError> {
    if (mask.width, mask.height) != (flow.width, flow.height) {
        return Err(FlowError::DimensionMismatch(flow.width, flow.height, mask.width, mask.height));
    }
    let mut out = Vec::with_capacity(3 * flow.width * flow.height);
    for y in 0..flow.height {
        for x in 0..flow.width {
            let (u, v) = flow.get(x, y);
            for value in [u, v] {
                if !value.is_finite() {
                    return Err(FlowError::NonFinite { x, y });
                }
                if value.abs() >= KITTI_MAX {
                    return Err(FlowError::OutOfRange { x, y, value });
                }
            }
            out.push(Float::round(u * KITTI_SCALE + KITTI_OFFSET) as u16);
            out.push(Float::round(v * KITTI_SCALE + KITTI_OFFSET) as u16);
            out.push(mask.get(x, y) as u16);
        }
    }
    Ok(out)
}

pub fn decode_kitti_value(stored: u16) -> f32 {
    (stored as f32 - KITTI_OFFSET) / KITTI_SCALE
}

/// Inverse of [`encode_kitti`]; any non-zero third channel counts as valid.
pub fn decode_kitti(width: usize, height: usize, samples: &[u16]) -> Result<(FlowField, ValidityMask), FlowError> {
    if samples.len() != 3 * width * height {
        return Err(FlowError::Malformed(format!(
            "{} samples for a {width}x{height} three-channel raster",
            samples.len()
        )));
    }
    let mut flow = FlowField::zeros(width, height);
    let mut mask = ValidityMask::none_valid(width, height);
    for (i, px) in samples.chunks_exact(3).enumerate() {
        let (x, y) = (i % width, i / width);
        flow.set(x, y, decode_kitti_value(px[0]), decode_kitti_value(px[1]));
        mask.set(x, y, px[2] != 0);
    }
    Ok((flow, mask))
}

pub fn encode_raw(flow: &FlowField) -> Result<Vec<u8>, FlowError> {
    flow.check_finite()?;
    let dims = |n: usize| u32::try_from(n).map_err(|_| FlowError::Malformed(format!("dimension {n} too large")));
    let mut out = Vec::with_capacity(RAW_HEADER + 8 * flow.width * flow.height);
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&dims(flow.width)?.to_le_bytes());
    out.extend_from_slice(&dims(flow.height)?.to_le_bytes());
    for y in 0..flow.height {
        for x in 0..flow.width {
            let (u, v) = flow.get(x, y);
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<FlowField, FlowError> {
    if bytes.len() < RAW_HEADER || bytes[..8] != RAW_MAGIC {
        return Err(FlowError::Malformed("missing raw flow header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(8), word(12));
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(RAW_HEADER))
        .ok_or_else(|| FlowError::Malformed("raw flow dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(FlowError::Malformed(format!(
            "raw flow {width}x{height} needs {expected} bytes, got {}",
            bytes.len()
        )));
    }
    let mut flow = FlowField::zeros(width, height);
    for (i, px) in bytes[RAW_HEADER..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(px[..4].try_into().unwrap());
        let v = f32::from_le_bytes(px[4..].try_into().unwrap());
        flow.set(i % width, i / width, u, v);
    }
    flow.check_finite()?;
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kitti_reference_values() {
        assert_eq!(decode_kitti_value(32768), 0.0);
        assert_eq!(decode_kitti_value(32832), 1.0);
        let s = encode_kitti(&FlowField::constant(1, 1, 1.0, -0.5), &ValidityMask::all_valid(1, 1)).unwrap();
        assert_eq!(s, vec![32832, 32736, 1]);
    }

    #[test]
    fn kitti_rejects_out_of_range() {
        let m = ValidityMask::all_valid(1, 1);
        assert!(matches!(
            encode_kitti(&FlowField::constant(1, 1, 512.0, 0.0), &m),
            Err(FlowError::OutOfRange { .. })
        ));
        assert!(encode_kitti(&FlowField::constant(1, 1, -511.984375, 511.984375), &m).is_ok());
    }

    #[test]
    fn raw_rejects_truncation_and_bad_magic() {
        let bytes = encode_raw(&FlowField::constant(2, 2, 0.25, 1.0)).unwrap();
        assert!(decode_raw(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] ^= 1;
        assert!(decode_raw(&bad).is_err());
    }

    fn quantized() -> impl Strategy<Value = f32> {
        (-32767i32..=32767).prop_map(|q| q as f32 / 64.0)
    }

    proptest! {
        #[test]
        fn kitti_round_trip_is_exact_on_the_grid(
            w in 1usize..6, h in 1usize..6,
            vals in proptest::collection::vec((quantized(), quantized(), any::<bool>()), 25),
        ) {
            let mut flow = FlowField::zeros(w, h);
            let mut mask = ValidityMask::none_valid(w, h);
            for y in 0..h {
                for x in 0..w {
                    let (u, v, ok) = vals[y * 5 + x];
                    flow.set(x, y, u, v);
                    mask.set(x, y, ok);
                }
            }
            let (f2, m2) = decode_kitti(w, h, &encode_kitti(&flow, &mask).unwrap()).unwrap();
            prop_assert_eq!(f2, flow);
            prop_assert_eq!(m2, mask);
        }

        #[test]
        fn raw_round_trip_is_bit_exact(
            w in 0usize..6, h in 0usize..6,
            vals in proptest::collection::vec(-1e6f32..1e6, 72),
        ) {
            let flow = FlowField::from_planar(w, h, vals[..2 * w * h].to_vec()).unwrap();
            prop_assert_eq!(decode_raw(&encode_raw(&flow).unwrap()).unwrap(), flow);
        }
    }
}
