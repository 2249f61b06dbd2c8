//! PNG encodings: 8-bit RGB colour, 16-bit grayscale depth and 8-bit masks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::depth_codec::{decode_depth16, encode_depth16, DepthCodecConfig};
use crate::error::{Error, Result};
use crate::ply::color_to_u8;
use crate::types::VisibilityMask;

fn format_err(reason: impl ToString) -> Error {
    Error::Format {
        kind: "png",
        reason: reason.to_string(),
    }
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(format_err)?;
    writer.write_image_data(data).map_err(format_err)?;
    writer.finish().map_err(format_err)?;
    Ok(())
}

fn read_png(
    path: &Path,
    color: png::ColorType,
    depth: png::BitDepth,
) -> Result<(usize, usize, Vec<u8>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(format_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(format_err)?;
    if info.color_type != color || info.bit_depth != depth {
        return Err(format_err(format!(
            "{}: expected {color:?} {depth:?}, found {:?} {:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.line_size * info.height as usize);
    let (w, h) = (info.width as usize, info.height as usize);
    let row_bytes = w * color.samples() * if depth == png::BitDepth::Sixteen { 2 } else { 1 };
    if info.line_size != row_bytes {
        let packed: Vec<u8> = buf
            .chunks(info.line_size)
            .flat_map(|row| row[..row_bytes].iter().copied())
            .collect();
        return Ok((h, w, packed));
    }
    Ok((h, w, buf))
}

/// Writes `H×W×3` colours in `[0, 1]` as 8-bit RGB, each value
/// `round(c · 255)`.
pub fn write_rgb8(path: impl AsRef<Path>, rgb: &Array3<f64>) -> Result<()> {
    let (h, w, c) = rgb.dim();
    if c != 3 {
        return Err(Error::DimensionMismatch(format!("expected 3 channels, got {c}")));
    }
    let data: Vec<u8> = rgb.iter().map(|&v| color_to_u8(v)).collect();
    write_png(path.as_ref(), w, h, png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

pub fn read_rgb8(path: impl AsRef<Path>) -> Result<Array3<f64>> {
    let (h, w, data) = read_png(path.as_ref(), png::ColorType::Rgb, png::BitDepth::Eight)?;
    let values = data.into_iter().map(|b| f64::from(b) / 255.0).collect();
    Array3::from_shape_vec((h, w, 3), values).map_err(format_err)
}

/// Writes metric depth as 16-bit grayscale holding the depth codec's codes.
pub fn write_depth16(
    path: impl AsRef<Path>,
    depth: &Array2<f64>,
    codec: &DepthCodecConfig,
) -> Result<()> {
    let (h, w) = depth.dim();
    let codes = encode_depth16(depth, codec)?;
    let data: Vec<u8> = codes.iter().flat_map(|c| c.to_be_bytes()).collect();
    write_png(path.as_ref(), w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

pub fn read_depth16(path: impl AsRef<Path>, codec: &DepthCodecConfig) -> Result<Array2<f64>> {
    let codes = read_depth16_codes(path)?;
    Ok(decode_depth16(&codes, codec))
}

pub fn read_depth16_codes(path: impl AsRef<Path>) -> Result<Array2<u16>> {
    let (h, w, data) = read_png(
        path.as_ref(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
    )?;
    let codes = data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Array2::from_shape_vec((h, w), codes).map_err(format_err)
}

/// Writes a mask as 8-bit grayscale, 255 where set and 0 elsewhere.
pub fn write_mask(path: impl AsRef<Path>, mask: &VisibilityMask) -> Result<()> {
    let (h, w) = mask.dim();
    let data: Vec<u8> = mask.0.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path.as_ref(), w, h, png::ColorType::Grayscale, png::BitDepth::Eight, &data)
}

/// Reads a mask; values of 128 and above count as set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<VisibilityMask> {
    let (h, w, data) = read_png(path.as_ref(), png::ColorType::Grayscale, png::BitDepth::Eight)?;
    let bits = data.into_iter().map(|b| b >= 128).collect();
    Ok(VisibilityMask(Array2::from_shape_vec((h, w), bits).map_err(format_err)?))
}
