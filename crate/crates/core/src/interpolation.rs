//! Dense per-frame conditions between two consecutive keyframes, and a
//! deterministic stand-in for the video refiner.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projection::{back_project, render_points, RenderOptions};
use crate::types::{Camera, PointCloud, RenderBundle, RgbdImage, Trajectory, Validate, VisibilityMask};

/// Colour used by [`refine_stub`] when a frame has no rendered pixel at all.
pub const EMPTY_FRAME_GRAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeView {
    pub image: RgbdImage,
    pub camera: Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationRequest {
    pub first: KeyframeView,
    pub second: KeyframeView,
    /// Cameras between the two keyframes, in playback order.
    pub cameras: Vec<Camera>,
}

impl InterpolationRequest {
    /// Uses the trajectory poses strictly between `first_index` and
    /// `second_index` as the intermediate cameras.
    pub fn from_trajectory(
        traj: &Trajectory,
        first_index: usize,
        first: RgbdImage,
        second_index: usize,
        second: RgbdImage,
    ) -> Result<Self> {
        let n = traj.len();
        if first_index >= n || second_index >= n {
            return Err(Error::OutOfRangeValue(format!(
                "keyframe indices {first_index}, {second_index} outside trajectory of {n} poses"
            )));
        }
        let cameras: Vec<Camera> = if first_index <= second_index {
            (first_index + 1..second_index).map(|i| traj.camera(i)).collect()
        } else {
            (second_index + 1..first_index).rev().map(|i| traj.camera(i)).collect()
        };
        let req = Self {
            first: KeyframeView {
                image: first,
                camera: traj.camera(first_index),
            },
            second: KeyframeView {
                image: second,
                camera: traj.camera(second_index),
            },
            cameras,
        };
        req.validate()?;
        Ok(req)
    }

    /// The two keyframes' points, first keyframe's points first.
    pub fn cloud(&self) -> Result<PointCloud> {
        let mut cloud = back_project(&self.first.image, &self.first.camera, 0)?;
        cloud.extend_from(&back_project(&self.second.image, &self.second.camera, 1)?);
        Ok(cloud)
    }
}

impl Validate for InterpolationRequest {
    fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::OutOfRangeValue(
                "interpolation needs at least one intermediate camera".into(),
            ));
        }
        for view in [&self.first, &self.second] {
            view.camera.validate()?;
            view.image.check_dims(&view.camera.intrinsics)?;
            view.image.validate()?;
        }
        self.cameras.iter().try_for_each(Validate::validate)
    }
}

/// RGB condition for one interpolated frame.
///
/// The depth channel exists only for z-buffering and is not part of the
/// conditioning signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionFrame {
    rgb: Array3<f64>,
    mask: VisibilityMask,
    depth: Array2<f64>,
}

impl ConditionFrame {
    fn from_bundle(bundle: RenderBundle) -> Self {
        Self {
            rgb: bundle.image.rgb,
            mask: bundle.mask,
            depth: bundle.image.depth,
        }
    }

    pub fn rgb(&self) -> &Array3<f64> {
        &self.rgb
    }

    pub fn mask(&self) -> &VisibilityMask {
        &self.mask
    }

    /// Internal z-buffer depth, exposed for consistency checks.
    pub fn z_buffer_depth(&self) -> &Array2<f64> {
        &self.depth
    }

    /// Rebuilds the full render bundle, depth included.
    pub fn to_bundle(&self) -> RenderBundle {
        RenderBundle {
            image: RgbdImage {
                rgb: self.rgb.clone(),
                depth: self.depth.clone(),
            },
            mask: self.mask.clone(),
        }
    }
}

/// Renders the merged cloud of the two keyframes at every intermediate
/// camera. Frames are independent and rendered in parallel; the result is
/// in camera order.
pub fn render_interpolation_conditions(
    req: &InterpolationRequest,
    opts: &RenderOptions,
) -> Result<Vec<ConditionFrame>> {
    req.validate()?;
    let cloud = req.cloud()?;
    Ok(req
        .cameras
        .par_iter()
        .map(|cam| ConditionFrame::from_bundle(render_points(&cloud, cam, opts)))
        .collect())
}

/// Fills every hole with the nearest rendered pixel (Euclidean distance in
/// pixels; ties to the smaller row, then column). Rendered pixels are kept
/// as they are. A frame with no rendered pixel becomes uniform gray.
pub fn refine_stub(frames: &[ConditionFrame]) -> Vec<RgbdImage> {
    frames.par_iter().map(refine_frame).collect()
}

fn refine_frame(frame: &ConditionFrame) -> RgbdImage {
    let (h, w) = frame.mask.dim();
    let mut out = RgbdImage {
        rgb: frame.rgb.clone(),
        depth: frame.depth.clone(),
    };
    if frame.mask.count() == 0 {
        out.rgb.fill(EMPTY_FRAME_GRAY);
        return out;
    }
    for r in 0..h {
        for c in 0..w {
            if frame.mask.get(r, c) {
                continue;
            }
            let (sr, sc) = nearest_valid(&frame.mask, r, c);
            out.set_color(r, c, [0, 1, 2].map(|k| frame.rgb[(sr, sc, k)]));
            out.depth[(r, c)] = frame.depth[(sr, sc)];
        }
    }
    out
}

/// Ring search outward from `(r, c)`. A hit at Chebyshev radius `k` can
/// only be beaten by pixels within radius `⌊√d²⌋`, so the search stops
/// there.
fn nearest_valid(mask: &VisibilityMask, r: usize, c: usize) -> (usize, usize) {
    let (h, w) = mask.dim();
    let (r, c) = (r as i64, c as i64);
    let max_radius = h.max(w) as i64;
    let mut best: Option<(i64, usize, usize)> = None;
    let mut k = 1;
    while k <= max_radius {
        if let Some((d2, _, _)) = best {
            if k * k > d2 {
                break;
            }
        }
        for dr in -k..=k {
            let on_edge_row = dr.abs() == k;
            let step = if on_edge_row { 1 } else { 2 * k };
            let mut dc = -k;
            while dc <= k {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && mask.get(rr as usize, cc as usize) {
                    let cand = (dr * dr + dc * dc, rr as usize, cc as usize);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
                dc += step;
            }
        }
        k += 1;
    }
    let (_, rr, cc) = best.expect("mask has at least one set pixel");
    (rr, cc)
}
