//! Reference implementations and random instance builders shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scapegeom::{Camera, CameraIntrinsics, PointCloud, Pose, RgbdImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_pose(rng: &mut impl Rng) -> Pose {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let rot = Rotation3::from_scaled_axis(axis.normalize() * angle);
    let t = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    Pose::new(*rot.matrix(), t).expect("random rotation is orthonormal")
}

pub fn random_intrinsics(rng: &mut impl Rng, max_side: usize) -> CameraIntrinsics {
    let w = rng.random_range(4..=max_side);
    let h = rng.random_range(4..=max_side);
    let fx = rng.random_range(0.5..2.0) * w as f64;
    let fy = rng.random_range(0.5..2.0) * h as f64;
    let cx = rng.random_range(0.0..(w - 1) as f64);
    let cy = rng.random_range(0.0..(h - 1) as f64);
    CameraIntrinsics::new(fx, fy, cx, cy, w, h).unwrap()
}

pub fn random_camera(rng: &mut impl Rng, max_side: usize) -> Camera {
    Camera::new(random_intrinsics(rng, max_side), random_pose(rng))
}

/// Random colours in `[0, 1]`, depths uniform in `[lo, hi]`, and roughly
/// `hole_fraction` of pixels left at depth 0.
pub fn random_image(
    rng: &mut impl Rng,
    h: usize,
    w: usize,
    (lo, hi): (f64, f64),
    hole_fraction: f64,
) -> RgbdImage {
    let rgb = Array3::from_shape_simple_fn((h, w, 3), || rng.random::<f64>());
    let depth = Array2::from_shape_simple_fn((h, w), || {
        if rng.random::<f64>() < hole_fraction {
            0.0
        } else {
            rng.random_range(lo..=hi)
        }
    });
    RgbdImage::new(rgb, depth).unwrap()
}

/// Cloud built to collide: points are dropped on a handful of pixels at a
/// few discrete depths, with exact duplicates, plus points behind the
/// camera and outside the frustum.
pub fn colliding_cloud(rng: &mut impl Rng, camera: &Camera, n: usize) -> PointCloud {
    let (h, w) = (camera.height(), camera.width());
    let depths = [0.5, 1.0, 2.0, 2.0, 7.5, 30.0];
    let mut cloud = PointCloud::with_capacity(n);
    while cloud.len() < n {
        let color = [rng.random(), rng.random(), rng.random()];
        let roll: f64 = rng.random();
        let p_cam = if roll < 0.05 {
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -rng.random_range(0.0..3.0))
        } else if roll < 0.1 {
            camera.unproject(
                rng.random_range(-(w as f64)..2.0 * w as f64),
                rng.random_range(-(h as f64)..2.0 * h as f64),
                rng.random_range(0.1..10.0),
            )
        } else if roll < 0.15 && !cloud.is_empty() {
            let j = rng.random_range(0..cloud.len());
            let p = cloud.positions()[j];
            cloud.push(p, color, 0);
            continue;
        } else {
            let u = rng.random_range(0..w) as f64 + rng.random_range(-0.49..0.49);
            let v = rng.random_range(0..h) as f64 + rng.random_range(-0.49..0.49);
            camera.unproject(u, v, depths[rng.random_range(0..depths.len())])
        };
        cloud.push(camera.pose.transform_point(&p_cam), color, 0);
    }
    cloud
}

/// Brute-force z-buffer: for every pixel, scan every point and keep the
/// lexicographic minimum of `(z, index)` among points covering it.
pub fn zbuffer_oracle(
    cloud: &PointCloud,
    camera: &Camera,
    z_near: f64,
    splat_radius: usize,
) -> (Array3<f64>, Array2<f64>, Array2<bool>) {
    let (h, w) = (camera.height(), camera.width());
    let k = &camera.intrinsics;
    let centers: Vec<Option<(i64, i64, f64)>> = cloud
        .positions()
        .iter()
        .map(|p| {
            let q = camera.pose.rotation.transpose() * (p - camera.pose.translation);
            if q.z <= z_near {
                return None;
            }
            let u = k.fx * q.x / q.z + k.cx;
            let v = k.fy * q.y / q.z + k.cy;
            let (c, r) = ((u + 0.5).floor(), (v + 0.5).floor());
            if c < 0.0 || r < 0.0 || c >= w as f64 || r >= h as f64 {
                return None;
            }
            Some((r as i64, c as i64, q.z))
        })
        .collect();
    let rad = splat_radius as i64;
    let mut rgb = Array3::zeros((h, w, 3));
    let mut depth = Array2::zeros((h, w));
    let mut mask = Array2::from_elem((h, w), false);
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut best: Option<(f64, usize)> = None;
            for (i, hit) in centers.iter().enumerate() {
                let Some((pr, pc, z)) = *hit else { continue };
                if (pr - r).abs() > rad || (pc - c).abs() > rad {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bz, bi)) => z < bz || (z == bz && i < bi),
                };
                if better {
                    best = Some((z, i));
                }
            }
            if let Some((z, i)) = best {
                let (ru, cu) = (r as usize, c as usize);
                depth[(ru, cu)] = z;
                mask[(ru, cu)] = true;
                for ch in 0..3 {
                    rgb[(ru, cu, ch)] = cloud.colors()[i][ch];
                }
            }
        }
    }
    (rgb, depth, mask)
}

/// Result of the sort-and-mean reference for the trimmed loss.
pub struct TrimmedReference {
    pub loss: f64,
    /// Flat pixel indices that survive trimming.
    pub kept: Vec<usize>,
    pub trimmed: usize,
}

/// Per-pixel residual `Σ_c w_c (x_c − h_c)² / 4`.
pub fn residual(x: &Array3<f64>, h: &Array3<f64>, r: usize, c: usize, weights: &[f64; 4]) -> f64 {
    (0..4)
        .map(|k| {
            let d = x[(r, c, k)] - h[(r, c, k)];
            weights[k] * d * d
        })
        .sum::<f64>()
        / 4.0
}

/// Fully sorts masked residuals by `(residual, index)`, drops the top
/// `ceil(trim · K)`, and averages the rest summed in pixel order. `None`
/// when nothing survives.
pub fn trimmed_loss_oracle(
    x: &Array3<f64>,
    h: &Array3<f64>,
    mask: &Array2<bool>,
    depth_weight: f64,
    trim: f64,
) -> Option<TrimmedReference> {
    let (rows, cols, _) = x.dim();
    let weights = [1.0, 1.0, 1.0, depth_weight];
    let mut all: Vec<(f64, usize)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask[(r, c)] {
                all.push((residual(x, h, r, c, &weights), r * cols + c));
            }
        }
    }
    let k = all.len();
    let exact = trim * k as f64;
    let snapped = if (exact - exact.round()).abs() <= 1e-9 * exact.abs().max(1.0) {
        exact.round()
    } else {
        exact
    };
    let trimmed = snapped.ceil() as usize;
    if k == 0 || trimmed >= k {
        return None;
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut kept: Vec<usize> = all[..k - trimmed].iter().map(|&(_, i)| i).collect();
    kept.sort_unstable();
    let sum: f64 = kept
        .iter()
        .map(|&i| residual(x, h, i / cols, i % cols, &weights))
        .sum();
    Some(TrimmedReference {
        loss: sum / kept.len() as f64,
        kept,
        trimmed,
    })
}

/// Random packed prediction/target pair in `[0, 1]` with a random mask.
pub fn random_packed(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    mask_fraction: f64,
) -> (Array3<f64>, Array3<f64>, Array2<bool>) {
    let x = Array3::from_shape_simple_fn((rows, cols, 4), || rng.random::<f64>());
    let h = Array3::from_shape_simple_fn((rows, cols, 4), || rng.random::<f64>());
    let mut mask = Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() < mask_fraction);
    mask[(0, 0)] = true;
    (x, h, mask)
}
