//! Back-projection of RGB-D images into world points and z-buffered point
//! rendering.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::Result;
use crate::types::{Camera, PointCloud, Pose, RenderBundle, RgbdImage, Validate, VisibilityMask};

/// Points closer than this (camera-frame z, metres) are never rendered.
pub const Z_NEAR: f64 = 1e-3;

/// Below this many points projection runs on the calling thread.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Square splat half-width in pixels. 0 writes a single pixel.
    pub splat_radius: usize,
    pub z_near: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            splat_radius: 0,
            z_near: Z_NEAR,
        }
    }
}

/// Lifts every pixel with positive depth to a world point tagged with
/// `source`.
pub fn back_project(image: &RgbdImage, camera: &Camera, source: usize) -> Result<PointCloud> {
    image.check_dims(&camera.intrinsics)?;
    camera.validate()?;
    let mut cloud = PointCloud::with_capacity(image.valid_pixel_count());
    for ((row, col), &d) in image.depth.indexed_iter() {
        if d > 0.0 {
            let p_cam = camera.unproject(col as f64, row as f64, d);
            cloud.push(camera.pose.transform_point(&p_cam), image.color(row, col), source);
        }
    }
    Ok(cloud)
}

/// Rounds half up, e.g. `-0.5 → 0`, `2.5 → 3`.
#[inline]
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Pixel and camera-frame depth a world point lands on, if any.
#[inline]
pub fn project_to_pixel(
    camera: &Camera,
    point: &Vector3<f64>,
    z_near: f64,
) -> Option<(usize, usize, f64)> {
    let p = camera.world_to_camera(point);
    if !(p.z > z_near) {
        return None;
    }
    let (u, v) = camera.project_camera_point(&p);
    let (col, row) = (round_half_up(u), round_half_up(v));
    if col < 0.0 || row < 0.0 || col >= camera.width() as f64 || row >= camera.height() as f64 {
        return None;
    }
    Some((row as usize, col as usize, p.z))
}

/// Renders `cloud` into `camera`'s image plane.
///
/// The nearest camera-frame depth wins each pixel; exact ties go to the
/// point with the lowest index. The output does not depend on the number of
/// worker threads.
pub fn render_points(cloud: &PointCloud, camera: &Camera, opts: &RenderOptions) -> RenderBundle {
    let (h, w) = (camera.height(), camera.width());
    let mut bundle = RenderBundle::empty(h, w);

    let project = |p: &Vector3<f64>| project_to_pixel(camera, p, opts.z_near);
    let hits: Vec<Option<(usize, usize, f64)>> = if cloud.len() >= PARALLEL_THRESHOLD {
        cloud.positions().par_iter().map(project).collect()
    } else {
        cloud.positions().iter().map(project).collect()
    };

    // Winner per pixel: (depth, point index). Points are visited in index
    // order and only a strictly smaller depth replaces the incumbent, which
    // realises the lowest-index tie-break.
    let mut winner: Vec<Option<(f64, usize)>> = vec![None; h * w];
    let r = opts.splat_radius as isize;
    for (idx, hit) in hits.iter().enumerate() {
        let Some((row, col, z)) = *hit else { continue };
        for dr in -r..=r {
            for dc in -r..=r {
                let (rr, cc) = (row as isize + dr, col as isize + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let slot = &mut winner[rr as usize * w + cc as usize];
                match slot {
                    Some((best, _)) if *best <= z => {}
                    _ => *slot = Some((z, idx)),
                }
            }
        }
    }

    let colors = cloud.colors();
    for (pixel, slot) in winner.iter().enumerate() {
        if let Some((z, idx)) = *slot {
            let (row, col) = (pixel / w, pixel % w);
            bundle.image.depth[(row, col)] = z;
            bundle.image.set_color(row, col, colors[idx]);
            bundle.mask.0[(row, col)] = true;
        }
    }
    bundle
}

/// Applies `pose` to every position; colours and sources are untouched.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let mut out = cloud.clone();
    for p in out.positions_mut() {
        *p = pose.transform_point(p);
    }
    out
}

/// Concatenates clouds in order.
pub fn merge_clouds<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
    let mut out = PointCloud::new();
    for c in clouds {
        out.extend_from(c);
    }
    out
}

/// Visibility mask of a render, for callers that only need coverage.
pub fn coverage(cloud: &PointCloud, camera: &Camera, opts: &RenderOptions) -> VisibilityMask {
    render_points(cloud, camera, opts).mask
}
