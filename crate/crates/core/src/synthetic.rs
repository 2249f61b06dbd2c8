//! Ray-cast synthetic scenes for demos, tests and benchmarks.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{Camera, CameraIntrinsics, Pose, RgbdImage, Trajectory};

/// A straight box-shaped corridor along `+z`, walked by a forward-facing
/// camera. Surfaces carry a one-metre checkerboard with colours that are
/// exact multiples of 1/255, so 8-bit round trips are lossless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Number of trajectory poses.
    pub poses: usize,
    /// Metres between consecutive poses.
    pub spacing: f64,
    /// Distance from the axis to each side wall.
    pub half_width: f64,
    /// Floor plane below the camera (`+y`).
    pub floor: f64,
    /// Ceiling plane above the camera (`−y`).
    pub ceiling: f64,
    /// How far the end wall sits beyond the last pose.
    pub end_margin: f64,
}

impl Default for Corridor {
    fn default() -> Self {
        Self {
            width: 32,
            height: 24,
            focal: 16.0,
            poses: 31,
            spacing: 1.0,
            half_width: 3.0,
            floor: 1.5,
            ceiling: 2.5,
            end_margin: 20.0,
        }
    }
}

const PALETTE: [[[u8; 3]; 2]; 5] = [
    [[200, 60, 40], [120, 30, 20]],
    [[40, 160, 80], [20, 90, 40]],
    [[90, 90, 90], [170, 170, 170]],
    [[230, 230, 200], [200, 200, 160]],
    [[40, 60, 200], [20, 30, 120]],
];

impl Corridor {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(self.focal, self.width, self.height)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        let poses = (0..self.poses)
            .map(|i| Pose::from_translation(Vector3::new(0.0, 0.0, i as f64 * self.spacing)))
            .collect();
        Trajectory::new(self.intrinsics()?, poses)
    }

    fn end_z(&self) -> f64 {
        self.poses.saturating_sub(1) as f64 * self.spacing + self.end_margin
    }

    /// Exact RGB-D view of the corridor from `camera`.
    pub fn render(&self, camera: &Camera) -> RgbdImage {
        let (h, w) = (camera.height(), camera.width());
        let mut img = RgbdImage::zeros(h, w);
        let origin = camera.pose.center();
        for r in 0..h {
            for c in 0..w {
                let ray_cam = camera.unproject(c as f64, r as f64, 1.0);
                let dir = camera.pose.rotation * ray_cam;
                if let Some((t, surface, hit)) = self.intersect(&origin, &dir) {
                    let (a, b) = match surface {
                        0 | 1 => (hit.y, hit.z),
                        2 | 3 => (hit.x, hit.z),
                        _ => (hit.x, hit.y),
                    };
                    let parity = ((a.floor() + b.floor()) as i64).rem_euclid(2) as usize;
                    let color = PALETTE[surface][parity].map(|v| f64::from(v) / 255.0);
                    img.set_color(r, c, color);
                    img.depth[(r, c)] = t;
                }
            }
        }
        img
    }

    /// Nearest hit as `(t, surface, point)`; `t` is camera-frame depth since
    /// the ray has unit forward component.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize, Vector3<f64>)> {
        let planes = [
            (0, -self.half_width),
            (0, self.half_width),
            (1, self.floor),
            (1, -self.ceiling),
            (2, self.end_z()),
        ];
        planes
            .iter()
            .enumerate()
            .filter_map(|(surface, &(axis, value))| {
                if d[axis] == 0.0 {
                    return None;
                }
                let t = (value - o[axis]) / d[axis];
                (t > 0.0).then(|| (t, surface, o + d * t))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Trajectory plus the exact first frame.
    pub fn build(&self) -> Result<(Trajectory, RgbdImage)> {
        let traj = self.trajectory()?;
        let initial = self.render(&traj.camera(0));
        Ok((traj, initial))
    }
}
