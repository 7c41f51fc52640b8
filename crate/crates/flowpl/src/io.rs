//! PNG and raw files for frames, flows, masks and checkpoints.
//!
//! Frames are stored as 16-bit RGB, so a value `v` in `[0, 1]` comes back
//! as `round(v * 65535) / 65535`. Masks are 8-bit grayscale, 255 = valid.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use flowpl_core::flow::{decode_kitti, decode_raw, encode_kitti, encode_raw, FlowField, Image, ValidityMask};
use flowpl_core::model::Checkpoint;
use png::{BitDepth, ColorType};

use crate::error::{Error, Result};

struct Raster {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn write_png(path: &Path, r: &Raster) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::data(path, "image too large"));
    let mut enc = png::Encoder::new(&mut w, dim(r.width)?, dim(r.height)?);
    enc.set_color(r.color);
    enc.set_depth(r.depth);
    let png_err = |e: png::EncodingError| Error::data(path, e);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&r.bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_png(path: &Path) -> Result<Raster> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let bad = |e: png::DecodingError| Error::data(path, e);
    let mut reader = dec.read_info().map_err(bad)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::data(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(bad)?;
    bytes.truncate(info.buffer_size());
    Ok(Raster {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes,
    })
}

fn expect(path: &Path, r: &Raster, color: ColorType, depth: BitDepth) -> Result<()> {
    if r.color != color || r.depth != depth {
        return Err(Error::data(path, format!("expected {color:?}/{depth:?} PNG, found {:?}/{:?}", r.color, r.depth)));
    }
    Ok(())
}

fn u16_samples(bytes: &[u8]) -> Vec<u16> {
    bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
}

fn u16_bytes(samples: &[u16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_be_bytes()).collect()
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Three-channel frame as 16-bit RGB.
pub fn write_frame(path: &Path, img: &Image) -> Result<()> {
    if img.channels != 3 {
        return Err(Error::data(path, format!("frames have 3 channels, got {}", img.channels)));
    }
    let mut samples = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                samples.push(quantize16(img.get(c, x, y)));
            }
        }
    }
    write_png(
        path,
        &Raster { width: img.width, height: img.height, color: ColorType::Rgb, depth: BitDepth::Sixteen, bytes: u16_bytes(&samples) },
    )
}

pub fn read_frame(path: &Path) -> Result<Image> {
    let r = read_png(path)?;
    expect(path, &r, ColorType::Rgb, BitDepth::Sixteen)?;
    let samples = u16_samples(&r.bytes);
    let mut img = Image::new(r.width, r.height, 3);
    for (i, px) in samples.chunks_exact(3).enumerate() {
        for (c, &s) in px.iter().enumerate() {
            img.set(c, i % r.width, i / r.width, s as f32 / 65535.0);
        }
    }
    Ok(img)
}

/// 8-bit RGB for visualizations; values are clamped to `[0, 1]`.
pub fn write_rgb8(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.width * img.height * 3);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                let c = c.min(img.channels - 1);
                bytes.push((img.get(c, x, y).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    write_png(path, &Raster { width: img.width, height: img.height, color: ColorType::Rgb, depth: BitDepth::Eight, bytes })
}

pub fn write_mask(path: &Path, mask: &ValidityMask) -> Result<()> {
    let bytes = mask.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    write_png(path, &Raster { width: mask.width, height: mask.height, color: ColorType::Grayscale, depth: BitDepth::Eight, bytes })
}

pub fn read_mask(path: &Path) -> Result<ValidityMask> {
    let r = read_png(path)?;
    expect(path, &r, ColorType::Grayscale, BitDepth::Eight)?;
    Ok(ValidityMask { width: r.width, height: r.height, data: r.bytes.iter().map(|&b| b != 0).collect() })
}

/// KITTI flow PNG: 16-bit RGB holding `(u, v, valid)`.
pub fn write_kitti_png(path: &Path, flow: &FlowField, mask: &ValidityMask) -> Result<()> {
    let samples = encode_kitti(flow, mask).map_err(|e| Error::data(path, e))?;
    write_png(
        path,
        &Raster { width: flow.width, height: flow.height, color: ColorType::Rgb, depth: BitDepth::Sixteen, bytes: u16_bytes(&samples) },
    )
}

pub fn read_kitti_png(path: &Path) -> Result<(FlowField, ValidityMask)> {
    let r = read_png(path)?;
    expect(path, &r, ColorType::Rgb, BitDepth::Sixteen)?;
    decode_kitti(r.width, r.height, &u16_samples(&r.bytes)).map_err(|e| Error::data(path, e))
}

pub fn write_raw_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = encode_raw(flow).map_err(|e| Error::data(path, e))?;
    write_bytes(path, &bytes)
}

pub fn read_raw_flow(path: &Path) -> Result<FlowField> {
    decode_raw(&read_bytes(path)?).map_err(|e| Error::data(path, e))
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_bytes(path, &ckpt.encode()?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&read_bytes(path)?).map_err(|e| Error::data(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_is_quantized_to_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        let data: Vec<f32> = (0..3 * 5 * 4).map(|i| i as f32 / 59.0).collect();
        let img = Image::from_data(5, 4, 3, data).unwrap();
        write_frame(&p, &img).unwrap();
        let back = read_frame(&p).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(*b, quantize16(*a) as f32 / 65535.0);
        }
        // stored frames are fixed points
        write_frame(&p, &back).unwrap();
        assert_eq!(read_frame(&p).unwrap(), back);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let mut m = ValidityMask::all_valid(3, 2);
        m.set(1, 1, false);
        write_mask(&p, &m).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
    }

    #[test]
    fn wrong_png_kind_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask(&p, &ValidityMask::all_valid(2, 2)).unwrap();
        let err = read_frame(&p).unwrap_err();
        assert!(matches!(err, Error::Data { .. }), "{err}");
        fs::write(&p, b"not a png").unwrap();
        assert_eq!(read_mask(&p).unwrap_err().exit_code(), crate::error::EXIT_DATA);
    }
}
