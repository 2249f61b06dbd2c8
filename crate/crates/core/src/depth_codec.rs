//! Depth normalisation and 16-bit quantisation for the RGB-D data path.
//!
//! Depth is clamped to `max_depth`, mapped linearly onto `[0, 1]` and
//! quantised to `round(n · 65535)`. Code 0 is reserved for holes by virtue
//! of depth 0 mapping to it.

use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::RgbdImage;

pub const DEFAULT_MAX_DEPTH: f64 = 300.0;
pub const DEPTH16_MAX_CODE: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthCodecConfig {
    pub max_depth: f64,
}

impl Default for DepthCodecConfig {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

impl DepthCodecConfig {
    pub fn new(max_depth: f64) -> Result<Self> {
        if !(max_depth > 0.0 && max_depth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "max_depth must be positive, got {max_depth}"
            )));
        }
        Ok(Self { max_depth })
    }

    /// Largest round-trip error of the 16-bit code (half a quantisation step).
    pub fn quantization_error(&self) -> f64 {
        self.max_depth / f64::from(DEPTH16_MAX_CODE) / 2.0
    }

    pub fn normalize(&self, depth: f64) -> Result<f64> {
        normalize_depth(depth, self)
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        value * self.max_depth
    }
}

/// `min(d, max_depth) / max_depth`.
pub fn normalize_depth(depth: f64, cfg: &DepthCodecConfig) -> Result<f64> {
    if depth < 0.0 || depth.is_nan() {
        return Err(Error::NegativeDepth(depth));
    }
    Ok(depth.min(cfg.max_depth) / cfg.max_depth)
}

pub fn encode_depth16_value(depth: f64, cfg: &DepthCodecConfig) -> Result<u16> {
    let n = normalize_depth(depth, cfg)?;
    Ok((n * f64::from(DEPTH16_MAX_CODE)).round() as u16)
}

pub fn decode_depth16_value(code: u16, cfg: &DepthCodecConfig) -> f64 {
    f64::from(code) / f64::from(DEPTH16_MAX_CODE) * cfg.max_depth
}

pub fn encode_depth16(depth: &Array2<f64>, cfg: &DepthCodecConfig) -> Result<Array2<u16>> {
    if let Some(&d) = depth.iter().find(|d| **d < 0.0 || d.is_nan()) {
        return Err(Error::NegativeDepth(d));
    }
    Ok(depth.mapv(|d| {
        let n = d.min(cfg.max_depth) / cfg.max_depth;
        (n * f64::from(DEPTH16_MAX_CODE)).round() as u16
    }))
}

pub fn decode_depth16(codes: &Array2<u16>, cfg: &DepthCodecConfig) -> Array2<f64> {
    codes.mapv(|c| decode_depth16_value(c, cfg))
}

/// Pure-arithmetic stand-in for the RGB-D autoencoder objective:
/// `MSE(rgb) + λ · MSE(normalised depth) + kl_term`.
///
/// `recon_depth` is in metres, like `target.depth`; both are normalised with
/// `cfg` before comparison.
pub fn vae_loss(
    recon_rgb: &Array3<f64>,
    recon_depth: &Array2<f64>,
    target: &RgbdImage,
    kl_term: f64,
    lambda_depth: f64,
    cfg: &DepthCodecConfig,
) -> Result<f64> {
    if recon_rgb.dim() != target.rgb.dim() || recon_depth.dim() != target.depth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "reconstruction {:?}/{:?} vs target {:?}/{:?}",
            recon_rgb.dim(),
            recon_depth.dim(),
            target.rgb.dim(),
            target.depth.dim()
        )));
    }
    if !(lambda_depth >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda_depth must be non-negative, got {lambda_depth}"
        )));
    }
    let rgb_mse = mean_squared(recon_rgb.iter().zip(target.rgb.iter()).map(|(a, b)| a - b));

    let mut sq = 0.0;
    let mut first_err = None;
    Zip::from(recon_depth).and(&target.depth).for_each(|&a, &b| {
        match (normalize_depth(a, cfg), normalize_depth(b, cfg)) {
            (Ok(na), Ok(nb)) => sq += (na - nb) * (na - nb),
            (Err(e), _) | (_, Err(e)) => {
                first_err.get_or_insert(e);
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    let depth_mse = if recon_depth.is_empty() {
        0.0
    } else {
        sq / recon_depth.len() as f64
    };
    Ok(rgb_mse + lambda_depth * depth_mse + kl_term)
}

/// Channels of the packed representation: r, g, b, normalised depth.
pub const PACKED_CHANNELS: usize = 4;

/// Packs an RGB-D image into `H×W×4` with depth normalised to `[0, 1]`.
/// This is the space losses and diffusion samples live in.
pub fn pack_channels(image: &RgbdImage, cfg: &DepthCodecConfig) -> Result<Array3<f64>> {
    let (h, w) = image.dim();
    let mut out = Array3::zeros((h, w, PACKED_CHANNELS));
    out.slice_mut(ndarray::s![.., .., 0..3]).assign(&image.rgb);
    for ((r, c), &d) in image.depth.indexed_iter() {
        out[(r, c, 3)] = normalize_depth(d, cfg)?;
    }
    Ok(out)
}

/// Inverse of [`pack_channels`]; colours and normalised depth are clamped to
/// `[0, 1]` first.
pub fn unpack_channels(channels: &Array3<f64>, cfg: &DepthCodecConfig) -> Result<RgbdImage> {
    let (h, w, c) = channels.dim();
    if c != PACKED_CHANNELS {
        return Err(Error::DimensionMismatch(format!(
            "expected {PACKED_CHANNELS} channels, got {c}"
        )));
    }
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let rgb = channels.slice(ndarray::s![.., .., 0..3]).mapv(clamp);
    let depth = channels
        .slice(ndarray::s![.., .., 3])
        .mapv(|v| cfg.denormalize(clamp(v)));
    debug_assert_eq!(depth.dim(), (h, w));
    RgbdImage::new(rgb, depth)
}

fn mean_squared(diffs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = diffs.fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
