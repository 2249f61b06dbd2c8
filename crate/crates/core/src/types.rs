//! Shared domain types.
//!
//! Conventions used throughout the crate:
//!
//! * Poses are camera-to-world rigid transforms. The camera frame is
//!   x-right, y-down, z-forward.
//! * Images are row-major with a top-left origin; pixel `(u, v)` is
//!   `(column, row)` and pixel centres sit on integer coordinates.
//! * A depth of exactly `0.0` means "no measurement".

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-entry tolerance for `RᵀR = I` and `det R = 1`.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// Checks a value's invariants and reports the first one violated.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the image centre.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

impl Validate for CameraIntrinsics {
    fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::OutOfRangeValue(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::OutOfRangeValue(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::OutOfRangeValue(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose and checks the rotation is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about the camera y axis (world "down"),
    /// i.e. a heading change for a level camera. Positive angles turn +z
    /// toward +x.
    pub fn yaw(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        }
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Applies the inverse transform without materialising it.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    /// Geodesic angle (radians) of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Angle of a rotation matrix, computed with atan2 so small angles keep
/// full precision.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = (r.trace() - 1.0) / 2.0;
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    sin.atan2(cos)
}

impl Validate for Pose {
    fn validate(&self) -> Result<()> {
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::OutOfRangeValue("pose has non-finite entries".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let identity = Matrix3::<f64>::identity();
        for (g, i) in gram.iter().zip(identity.iter()) {
            if (g - i).abs() > ORTHONORMAL_TOLERANCE {
                return Err(Error::NonOrthonormalRotation(format!(
                    "RᵀR deviates from identity by {:.3e}",
                    (g - i).abs()
                )));
            }
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(Error::NonOrthonormalRotation(format!(
                "det R = {det}, expected +1"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;

    fn try_from(repr: PoseRepr) -> Result<Self> {
        Pose::new(
            Matrix3::from_row_slice(&repr.rotation),
            Vector3::from(repr.translation),
        )
    }
}

impl From<Pose> for PoseRepr {
    fn from(pose: Pose) -> Self {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = pose.rotation[(r, c)];
            }
        }
        Self {
            rotation,
            translation: pose.translation.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.inverse_transform_point(p)
    }

    /// Continuous image coordinates of a camera-frame point. The caller is
    /// responsible for rejecting points at or behind the camera.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> (f64, f64) {
        let k = &self.intrinsics;
        (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy)
    }

    /// Camera-frame point on the ray through pixel `(u, v)` at depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth)
    }
}

impl Validate for Camera {
    fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.pose.validate()
    }
}

/// Colour plus metric depth. `rgb` is `H×W×3` in `[0, 1]`, `depth` is `H×W`
/// in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub rgb: Array3<f64>,
    pub depth: Array2<f64>,
}

impl RgbdImage {
    pub fn new(rgb: Array3<f64>, depth: Array2<f64>) -> Result<Self> {
        let (h, w, c) = rgb.dim();
        if c != 3 || depth.dim() != (h, w) {
            return Err(Error::DimensionMismatch(format!(
                "rgb is {h}x{w}x{c}, depth is {:?}",
                depth.dim()
            )));
        }
        Ok(Self { rgb, depth })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            rgb: Array3::zeros((height, width, 3)),
            depth: Array2::zeros((height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.depth.nrows()
    }

    pub fn width(&self) -> usize {
        self.depth.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.depth.dim()
    }

    pub fn color(&self, row: usize, col: usize) -> [f64; 3] {
        [
            self.rgb[(row, col, 0)],
            self.rgb[(row, col, 1)],
            self.rgb[(row, col, 2)],
        ]
    }

    pub fn set_color(&mut self, row: usize, col: usize, color: [f64; 3]) {
        for (c, v) in color.into_iter().enumerate() {
            self.rgb[(row, col, c)] = v;
        }
    }

    /// Number of pixels carrying a depth measurement.
    pub fn valid_pixel_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn check_dims(&self, intrinsics: &CameraIntrinsics) -> Result<()> {
        if self.dim() != (intrinsics.height, intrinsics.width) {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}, camera expects {}x{}",
                self.height(),
                self.width(),
                intrinsics.height,
                intrinsics.width
            )));
        }
        Ok(())
    }

    /// Like [`Validate::validate`], additionally bounding depth by `max_depth`.
    pub fn validate_depth_range(&self, max_depth: f64) -> Result<()> {
        self.validate()?;
        if let Some(d) = self.depth.iter().find(|&&d| d > max_depth) {
            return Err(Error::OutOfRangeValue(format!(
                "depth {d} exceeds max depth {max_depth}"
            )));
        }
        Ok(())
    }
}

impl Validate for RgbdImage {
    fn validate(&self) -> Result<()> {
        let (h, w, c) = self.rgb.dim();
        if c != 3 || self.depth.dim() != (h, w) {
            return Err(Error::DimensionMismatch(format!(
                "rgb is {h}x{w}x{c}, depth is {:?}",
                self.depth.dim()
            )));
        }
        if let Some(v) = self.rgb.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRangeValue(format!("rgb value {v} outside [0, 1]")));
        }
        if let Some(d) = self.depth.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::OutOfRangeValue(format!("depth value {d} is not a valid range")));
        }
        Ok(())
    }
}

/// World-frame coloured points, tagged with the keyframe they came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vector3<f64>>,
    colors: Vec<[f64; 3]>,
    source_index: Vec<usize>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            source_index: Vec::with_capacity(n),
        }
    }

    pub fn from_parts(
        positions: Vec<Vector3<f64>>,
        colors: Vec<[f64; 3]>,
        source_index: Vec<usize>,
    ) -> Result<Self> {
        let cloud = Self {
            positions,
            colors,
            source_index,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn push(&mut self, position: Vector3<f64>, color: [f64; 3], source: usize) {
        self.positions.push(position);
        self.colors.push(color);
        self.source_index.push(source);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }

    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
        self.source_index.extend_from_slice(&other.source_index);
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.positions
    }
}

impl Validate for PointCloud {
    fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.colors.len() != n || self.source_index.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} positions, {} colours, {} source indices",
                n,
                self.colors.len(),
                self.source_index.len()
            )));
        }
        if self.positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::OutOfRangeValue("non-finite point coordinate".into()));
        }
        if let Some(v) = self.colors.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRangeValue(format!("colour value {v} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Binary per-pixel visibility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask(pub Array2<bool>);

impl VisibilityMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self(Array2::from_elem((height, width), false))
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self(Array2::from_elem((height, width), true))
    }

    /// Mask of pixels with positive depth.
    pub fn from_depth(depth: &Array2<f64>) -> Self {
        Self(depth.mapv(|d| d > 0.0))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0[(row, col)]
    }
}

/// Rendered keyframe points and where they landed.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBundle {
    pub image: RgbdImage,
    pub mask: VisibilityMask,
}

impl RenderBundle {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            image: RgbdImage::zeros(height, width),
            mask: VisibilityMask::empty(height, width),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.image.dim()
    }
}

impl Validate for RenderBundle {
    fn validate(&self) -> Result<()> {
        self.image.validate()?;
        if self.mask.dim() != self.image.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mask is {:?}, image is {:?}",
                self.mask.dim(),
                self.image.dim()
            )));
        }
        let leaked = self
            .mask
            .0
            .iter()
            .zip(self.image.depth.iter())
            .any(|(&m, &d)| !m && d != 0.0);
        if leaked {
            return Err(Error::OutOfRangeValue(
                "unmasked pixel carries a depth value".into(),
            ));
        }
        Ok(())
    }
}

/// Ordered camera poses sharing one set of intrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub intrinsics: CameraIntrinsics,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(intrinsics: CameraIntrinsics, poses: Vec<Pose>) -> Result<Self> {
        let traj = Self { intrinsics, poses };
        traj.validate()?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn camera(&self, index: usize) -> Camera {
        Camera::new(self.intrinsics, self.poses[index])
    }

    pub fn cameras(&self) -> impl Iterator<Item = Camera> + '_ {
        self.poses.iter().map(|&p| Camera::new(self.intrinsics, p))
    }
}

impl Validate for Trajectory {
    fn validate(&self) -> Result<()> {
        if self.poses.is_empty() {
            return Err(Error::DimensionMismatch("trajectory has no poses".into()));
        }
        self.intrinsics.validate()?;
        self.poses.iter().try_for_each(Validate::validate)
    }
}
