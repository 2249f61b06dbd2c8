//! Masked, trimmed warp-consistency loss between a prediction and rendered
//! keyframe points, its gradient, and loss-based dataset filtering.
//!
//! The per-pixel residual is the mean over the four packed channels (r, g, b,
//! normalised depth) of `w_c · (x_c − h_c)²`, with `w_c = 1` for colour and
//! `depth_weight` for depth. Among the `K` masked pixels the
//! `ceil(trim_fraction · K)` largest residuals are dropped and the rest are
//! averaged. Residual ties are ordered by pixel index, so the pixel with the
//! higher index is trimmed first.

use ndarray::{Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::depth_codec::{pack_channels, DepthCodecConfig, PACKED_CHANNELS};
use crate::error::{Error, Result};
use crate::types::{RgbdImage, VisibilityMask};

pub const DEFAULT_TRIM_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub trim_fraction: f64,
    pub depth_weight: f64,
    /// Normalisation applied to metric depth before comparison.
    #[serde(default)]
    pub codec: DepthCodecConfig,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            trim_fraction: DEFAULT_TRIM_FRACTION,
            depth_weight: 1.0,
            codec: DepthCodecConfig::default(),
        }
    }
}

impl ConsistencyConfig {
    pub fn untrimmed() -> Self {
        Self {
            trim_fraction: 0.0,
            ..Self::default()
        }
    }

    pub fn with_trim(mut self, trim_fraction: f64) -> Self {
        self.trim_fraction = trim_fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidConfig(format!(
                "trim_fraction must lie in [0, 1), got {}",
                self.trim_fraction
            )));
        }
        if !(self.depth_weight >= 0.0 && self.depth_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "depth_weight must be non-negative, got {}",
                self.depth_weight
            )));
        }
        Ok(())
    }

    fn channel_weights(&self) -> [f64; PACKED_CHANNELS] {
        [1.0, 1.0, 1.0, self.depth_weight]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub kept_pixels: usize,
    pub trimmed_pixels: usize,
}

/// `fraction · n` snapped to the nearest integer when within rounding noise,
/// so that e.g. `0.07 · 100` counts as exactly 7.
fn scaled_count(fraction: f64, n: usize) -> f64 {
    let x = fraction * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// `ceil(fraction · n)`, robust to floating-point noise in the product.
pub fn ceil_count(fraction: f64, n: usize) -> usize {
    scaled_count(fraction, n).ceil() as usize
}

/// `floor(fraction · n)`, robust to floating-point noise in the product.
pub fn floor_count(fraction: f64, n: usize) -> usize {
    scaled_count(fraction, n).floor() as usize
}

struct Selection {
    /// Per flat pixel index: true if the pixel survives trimming.
    kept: Vec<bool>,
    residuals: Vec<f64>,
    kept_count: usize,
    trimmed_count: usize,
}

fn check_shapes(x: &ArrayView3<f64>, h: &ArrayView3<f64>, mask: &ArrayView2<bool>) -> Result<()> {
    let (rows, cols, ch) = x.dim();
    if ch != PACKED_CHANNELS || h.dim() != x.dim() || mask.dim() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?}, target {:?}, mask {:?}",
            x.dim(),
            h.dim(),
            mask.dim()
        )));
    }
    Ok(())
}

fn select(
    x: &ArrayView3<f64>,
    h: &ArrayView3<f64>,
    mask: &ArrayView2<bool>,
    cfg: &ConsistencyConfig,
) -> Result<Selection> {
    cfg.validate()?;
    check_shapes(x, h, mask)?;
    let (rows, cols, _) = x.dim();
    let weights = cfg.channel_weights();

    let mut residuals = vec![0.0; rows * cols];
    let mut order: Vec<(f64, usize)> = Vec::new();
    for ((r, c), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let res = (0..PACKED_CHANNELS)
            .map(|k| {
                let d = x[(r, c, k)] - h[(r, c, k)];
                weights[k] * d * d
            })
            .sum::<f64>()
            / PACKED_CHANNELS as f64;
        let idx = r * cols + c;
        residuals[idx] = res;
        order.push((res, idx));
    }

    let masked = order.len();
    if masked == 0 {
        return Err(Error::EmptyOverlap);
    }
    let trimmed_count = ceil_count(cfg.trim_fraction, masked);
    if trimmed_count >= masked {
        return Err(Error::EmptyOverlap);
    }
    let kept_count = masked - trimmed_count;

    let mut kept = vec![false; rows * cols];
    if trimmed_count > 0 {
        // Partition so the first kept_count entries are the smallest under
        // (residual, pixel index).
        order.select_nth_unstable_by(kept_count - 1, |a, b| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        });
    }
    for &(_, idx) in &order[..kept_count] {
        kept[idx] = true;
    }
    Ok(Selection {
        kept,
        residuals,
        kept_count,
        trimmed_count,
    })
}

/// Trimmed masked MSE on packed `H×W×4` arrays.
pub fn warp_loss_packed(
    x: ArrayView3<f64>,
    h: ArrayView3<f64>,
    mask: ArrayView2<bool>,
    cfg: &ConsistencyConfig,
) -> Result<LossReport> {
    let sel = select(&x, &h, &mask, cfg)?;
    let sum: f64 = sel
        .residuals
        .iter()
        .zip(&sel.kept)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r)
        .sum();
    Ok(LossReport {
        loss: sum / sel.kept_count as f64,
        kept_pixels: sel.kept_count,
        trimmed_pixels: sel.trimmed_count,
    })
}

/// Gradient of [`warp_loss_packed`] with respect to `x`, holding the set of
/// surviving pixels fixed at the current `x`.
///
/// At a surviving pixel, channel `c` gets `2·w_c·(x_c − h_c) / (4·K_kept)`;
/// unmasked and trimmed pixels get exactly zero.
pub fn warp_loss_gradient_packed(
    x: ArrayView3<f64>,
    h: ArrayView3<f64>,
    mask: ArrayView2<bool>,
    cfg: &ConsistencyConfig,
) -> Result<Array3<f64>> {
    let sel = select(&x, &h, &mask, cfg)?;
    let (rows, cols, _) = x.dim();
    let weights = cfg.channel_weights();
    let scale = 2.0 / (PACKED_CHANNELS as f64 * sel.kept_count as f64);
    let mut grad = Array3::zeros((rows, cols, PACKED_CHANNELS));
    for (idx, _) in sel.kept.iter().enumerate().filter(|(_, &k)| k) {
        let (r, c) = (idx / cols, idx % cols);
        for k in 0..PACKED_CHANNELS {
            grad[(r, c, k)] = scale * weights[k] * (x[(r, c, k)] - h[(r, c, k)]);
        }
    }
    Ok(grad)
}

fn check_mask(x: &RgbdImage, h: &RgbdImage, m: &VisibilityMask) -> Result<()> {
    if x.dim() != h.dim() || m.dim() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?}, target {:?}, mask {:?}",
            x.dim(),
            h.dim(),
            m.dim()
        )));
    }
    Ok(())
}

/// Warp-consistency loss between a predicted RGB-D frame `x` and rendered
/// keyframe points `h` over mask `m`.
pub fn warp_loss(
    x: &RgbdImage,
    h: &RgbdImage,
    m: &VisibilityMask,
    cfg: &ConsistencyConfig,
) -> Result<LossReport> {
    check_mask(x, h, m)?;
    let xp = pack_channels(x, &cfg.codec)?;
    let hp = pack_channels(h, &cfg.codec)?;
    warp_loss_packed(xp.view(), hp.view(), m.0.view(), cfg)
}

/// Gradient of [`warp_loss`] in packed units: colour channels as-is, depth
/// in normalised `[0, 1]` units.
pub fn warp_loss_gradient(
    x: &RgbdImage,
    h: &RgbdImage,
    m: &VisibilityMask,
    cfg: &ConsistencyConfig,
) -> Result<Array3<f64>> {
    check_mask(x, h, m)?;
    let xp = pack_channels(x, &cfg.codec)?;
    let hp = pack_channels(h, &cfg.codec)?;
    warp_loss_gradient_packed(xp.view(), hp.view(), m.0.view(), cfg)
}

/// Drops the `floor(drop_fraction · N)` samples with the largest loss and
/// returns the surviving indices in their original order. Among equal
/// losses the higher index is dropped first.
pub fn filter_dataset(losses: &[f64], drop_fraction: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::InvalidConfig(format!(
            "drop_fraction must lie in [0, 1), got {drop_fraction}"
        )));
    }
    let n_drop = floor_count(drop_fraction, losses.len());
    let mut by_loss: Vec<usize> = (0..losses.len()).collect();
    by_loss.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(b.cmp(&a)));
    let mut dropped = vec![false; losses.len()];
    for &i in &by_loss[..n_drop] {
        dropped[i] = true;
    }
    Ok((0..losses.len()).filter(|&i| !dropped[i]).collect())
}
