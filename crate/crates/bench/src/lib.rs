//! Deterministic fixtures for the kernel benchmarks.

use ndarray::{Array2, Array3};
use scapegeom::synthetic::Corridor;
use scapegeom::{
    back_project, Camera, CameraIntrinsics, ConsistencyConfig, MapPolyline, ObjectBox, PointCloud,
    Pose, RgbdImage, SceneControls, Trajectory,
};

/// Cheap reproducible value in `[0, 1)`.
fn hash01(i: usize, salt: u64) -> f64 {
    let mut x = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 31;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 29;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

pub fn camera(width: usize, height: usize) -> Camera {
    Camera::new(
        CameraIntrinsics::centered(width as f64 * 0.8, width, height).unwrap(),
        Pose::identity(),
    )
}

/// `n` points scattered through the frustum of [`camera`] at depths in
/// `[1, 40]`.
pub fn frustum_cloud(n: usize, cam: &Camera) -> PointCloud {
    let mut cloud = PointCloud::with_capacity(n);
    for i in 0..n {
        let u = hash01(i, 1) * cam.width() as f64;
        let v = hash01(i, 2) * cam.height() as f64;
        let d = 1.0 + 39.0 * hash01(i, 3);
        let p = cam.unproject(u, v, d);
        cloud.push(p, [hash01(i, 4), hash01(i, 5), hash01(i, 6)], 0);
    }
    cloud
}

pub fn dense_image(width: usize, height: usize) -> RgbdImage {
    let rgb = Array3::from_shape_fn((height, width, 3), |(r, c, k)| hash01(r * width + c, 10 + k as u64));
    let depth = Array2::from_shape_fn((height, width), |(r, c)| 0.5 + 49.5 * hash01(r * width + c, 20));
    RgbdImage::new(rgb, depth).unwrap()
}

/// Packed prediction, target and mask for loss benchmarks.
pub fn packed_pair(width: usize, height: usize) -> (Array3<f64>, Array3<f64>, Array2<bool>, ConsistencyConfig) {
    let x = Array3::from_shape_fn((height, width, 4), |(r, c, k)| hash01((r * width + c) * 4 + k, 30));
    let h = Array3::from_shape_fn((height, width, 4), |(r, c, k)| hash01((r * width + c) * 4 + k, 31));
    let mask = Array2::from_shape_fn((height, width), |(r, c)| hash01(r * width + c, 32) < 0.7);
    (x, h, mask, ConsistencyConfig::default())
}

/// Corridor trajectory with the accumulated cloud of its first frame.
pub fn corridor_scene() -> (Trajectory, RgbdImage, PointCloud) {
    let corridor = Corridor {
        width: 128,
        height: 96,
        focal: 64.0,
        ..Corridor::default()
    };
    let (traj, initial) = corridor.build().unwrap();
    let cloud = back_project(&initial, &traj.camera(0), 0).unwrap();
    (traj, initial, cloud)
}

/// A road scene with lane lines and a handful of vehicles.
pub fn controls() -> SceneControls {
    let mut polylines = Vec::new();
    for (i, x) in [-3.5, 0.0, 3.5].into_iter().enumerate() {
        let layer = if i == 1 {
            scapegeom::conditioning::MapLayer::LaneDivider
        } else {
            scapegeom::conditioning::MapLayer::LaneBoundary
        };
        polylines.push(MapPolyline {
            layer,
            points: (0..20).map(|k| [x, 1.5, 2.0 + 3.0 * k as f64]).collect(),
        });
    }
    let boxes = (0..8)
        .map(|i| ObjectBox {
            category: scapegeom::conditioning::BoxCategory::Vehicle,
            center: [-2.0 + 4.0 * hash01(i, 40), 0.75, 6.0 + 5.0 * i as f64],
            size: [4.5, 1.9, 1.5],
            yaw: hash01(i, 41) - 0.5,
        })
        .collect();
    SceneControls { polylines, boxes }
}
