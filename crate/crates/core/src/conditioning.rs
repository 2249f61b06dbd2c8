//! Control images from HD-map polylines and 3-D boxes, and mask
//! downsampling to latent resolution.

use nalgebra::Vector3;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{round_half_up, Z_NEAR};
use crate::types::{Camera, Validate, VisibilityMask};

/// Colour as stored in PNG control images.
pub type Rgb8 = [u8; 3];

pub fn rgb8_to_f64(c: Rgb8) -> [f64; 3] {
    c.map(|v| f64::from(v) / 255.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapLayer {
    LaneBoundary,
    LaneDivider,
    PedestrianCrossing,
}

impl MapLayer {
    pub fn color(self) -> Rgb8 {
        match self {
            MapLayer::LaneBoundary => [255, 0, 0],
            MapLayer::LaneDivider => [0, 255, 0],
            MapLayer::PedestrianCrossing => [0, 0, 255],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPolyline {
    pub layer: MapLayer,
    pub points: Vec<[f64; 3]>,
}

impl Validate for MapPolyline {
    fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::OutOfRangeValue(format!(
                "polyline needs at least 2 points, got {}",
                self.points.len()
            )));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRangeValue("non-finite polyline point".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxCategory {
    Vehicle,
    Pedestrian,
    Roadblock,
    Other,
}

impl BoxCategory {
    pub fn color(self) -> Rgb8 {
        match self {
            BoxCategory::Vehicle => [255, 128, 0],
            BoxCategory::Pedestrian => [0, 255, 255],
            BoxCategory::Roadblock => [255, 0, 255],
            BoxCategory::Other => [128, 128, 128],
        }
    }
}

/// Oriented 3-D box in world coordinates.
///
/// `size` is `(length, width, height)`. The box heading is
/// `(sin yaw, 0, cos yaw)` and its up axis is world `−y`, so `yaw = 0`
/// faces `+z` like an identity camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub category: BoxCategory,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl Validate for ObjectBox {
    fn validate(&self) -> Result<()> {
        if self.size.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::OutOfRangeValue(format!(
                "box size must be positive, got {:?}",
                self.size
            )));
        }
        if self.center.iter().any(|v| !v.is_finite()) || !self.yaw.is_finite() {
            return Err(Error::OutOfRangeValue("non-finite box pose".into()));
        }
        Ok(())
    }
}

/// Corner pairs of the 12 box edges: bottom ring, top ring, then verticals.
pub const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Per-edge colours of the orientation image, indexed like [`BOX_EDGES`].
pub const EDGE_PALETTE: [Rgb8; 12] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [128, 0, 255],
    [0, 255, 128],
    [255, 0, 128],
    [128, 255, 0],
    [0, 128, 255],
];

impl ObjectBox {
    /// Corners 0–3 are the bottom face front-left, front-right, rear-right,
    /// rear-left; 4–7 the top face in the same order.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (s, c) = self.yaw.sin_cos();
        let forward = Vector3::new(s, 0.0, c);
        let up = Vector3::new(0.0, -1.0, 0.0);
        let left = up.cross(&forward);
        let center = Vector3::from(self.center);
        let [l, w, h] = self.size.map(|v| v / 2.0);
        let corner = |f: f64, lft: f64, u: f64| center + forward * (f * l) + left * (lft * w) + up * (u * h);
        [
            corner(1.0, 1.0, -1.0),
            corner(1.0, -1.0, -1.0),
            corner(-1.0, -1.0, -1.0),
            corner(-1.0, 1.0, -1.0),
            corner(1.0, 1.0, 1.0),
            corner(1.0, -1.0, 1.0),
            corner(-1.0, -1.0, 1.0),
            corner(-1.0, 1.0, 1.0),
        ]
    }
}

/// All conditioning inputs for one scene, rasterised per camera.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneControls {
    #[serde(default)]
    pub polylines: Vec<MapPolyline>,
    #[serde(default)]
    pub boxes: Vec<ObjectBox>,
}

impl Validate for SceneControls {
    fn validate(&self) -> Result<()> {
        self.polylines.iter().try_for_each(Validate::validate)?;
        self.boxes.iter().try_for_each(Validate::validate)
    }
}

impl SceneControls {
    pub fn rasterize(&self, camera: &Camera) -> ControlImages {
        ControlImages {
            map_image: rasterize_map(&self.polylines, camera),
            semantic_box_image: rasterize_boxes_semantic(&self.boxes, camera),
            orientation_box_image: rasterize_boxes_orientation(&self.boxes, camera),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlImages {
    pub map_image: Array3<f64>,
    pub semantic_box_image: Array3<f64>,
    pub orientation_box_image: Array3<f64>,
}

/// Pixel-accurate canvas; every drawing call writes whole `Rgb8` values.
struct Canvas {
    image: Array3<f64>,
}

impl Canvas {
    fn new(camera: &Camera) -> Self {
        Self {
            image: Array3::zeros((camera.height(), camera.width(), 3)),
        }
    }

    fn put(&mut self, row: i64, col: i64, color: [f64; 3]) {
        let (h, w, _) = self.image.dim();
        if row < 0 || col < 0 || row as usize >= h || col as usize >= w {
            return;
        }
        for (c, v) in color.into_iter().enumerate() {
            self.image[(row as usize, col as usize, c)] = v;
        }
    }

    /// Draws the world segment `a → b`, clipped to `z > z_near` in the camera
    /// frame and then to the image rectangle.
    fn segment(&mut self, camera: &Camera, a: &Vector3<f64>, b: &Vector3<f64>, color: Rgb8) {
        let Some((pa, pb)) = clip_near(camera.world_to_camera(a), camera.world_to_camera(b)) else {
            return;
        };
        let p = camera.project_camera_point(&pa);
        let q = camera.project_camera_point(&pb);
        let (w, h) = (camera.width() as f64, camera.height() as f64);
        let Some((p, q)) = clip_rect(p, q, (-0.5, -0.5), (w - 0.5, h - 0.5)) else {
            return;
        };
        let color = rgb8_to_f64(color);
        for (col, row) in line_pixels(p, q) {
            self.put(row, col, color);
        }
    }
}

fn clip_near(a: Vector3<f64>, b: Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
    match (a.z > Z_NEAR, b.z > Z_NEAR) {
        (true, true) => Some((a, b)),
        (false, false) => None,
        (a_in, _) => {
            let s = (Z_NEAR - a.z) / (b.z - a.z);
            let mut cut = a + (b - a) * s;
            // Keep the cut strictly in front of the plane so it projects.
            cut.z = cut.z.max(Z_NEAR * (1.0 + 1e-9));
            if a_in {
                Some((a, cut))
            } else {
                Some((cut, b))
            }
        }
    }
}

/// Liang–Barsky clip of segment `p → q` to `[lo, hi]`.
fn clip_rect(
    p: (f64, f64),
    q: (f64, f64),
    lo: (f64, f64),
    hi: (f64, f64),
) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (den, num) in [
        (-dx, p.0 - lo.0),
        (dx, hi.0 - p.0),
        (-dy, p.1 - lo.1),
        (dy, hi.1 - p.1),
    ] {
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
        } else {
            let r = num / den;
            if den < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some((
        (p.0 + t0 * dx, p.1 + t0 * dy),
        (p.0 + t1 * dx, p.1 + t1 * dy),
    ))
}

/// Pixels `(col, row)` of a one-pixel line: one per integer step along the
/// major axis, with the minor coordinate taken from the exact line.
pub fn line_pixels(p: (f64, f64), q: (f64, f64)) -> Vec<(i64, i64)> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let x_major = dx.abs() >= dy.abs();
    let (a0, a1, b0, slope) = if x_major {
        (p.0, q.0, p.1, if dx == 0.0 { 0.0 } else { dy / dx })
    } else {
        (p.1, q.1, p.0, dx / dy)
    };
    let (s, e) = (round_half_up(a0) as i64, round_half_up(a1) as i64);
    let step = if e >= s { 1 } else { -1 };
    let mut out = Vec::with_capacity((e - s).unsigned_abs() as usize + 1);
    let mut k = s;
    loop {
        let minor = round_half_up(b0 + (k as f64 - a0) * slope) as i64;
        out.push(if x_major { (k, minor) } else { (minor, k) });
        if k == e {
            break;
        }
        k += step;
    }
    out
}

/// Draws map polylines in input order, later segments overwriting earlier
/// ones. Background is black.
pub fn rasterize_map(polylines: &[MapPolyline], camera: &Camera) -> Array3<f64> {
    let mut canvas = Canvas::new(camera);
    for line in polylines {
        for pair in line.points.windows(2) {
            canvas.segment(
                camera,
                &Vector3::from(pair[0]),
                &Vector3::from(pair[1]),
                line.layer.color(),
            );
        }
    }
    canvas.image
}

/// Boxes sorted far to near by camera-frame depth of their centre; equal
/// depths keep input order.
fn painter_order(boxes: &[ObjectBox], camera: &Camera) -> Vec<usize> {
    let depth: Vec<f64> = boxes
        .iter()
        .map(|b| camera.world_to_camera(&Vector3::from(b.center)).z)
        .collect();
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| depth[j].total_cmp(&depth[i]));
    order
}

fn rasterize_boxes(
    boxes: &[ObjectBox],
    camera: &Camera,
    color: impl Fn(&ObjectBox, usize) -> Rgb8,
) -> Array3<f64> {
    let mut canvas = Canvas::new(camera);
    for i in painter_order(boxes, camera) {
        let corners = boxes[i].corners();
        for (e, &(a, b)) in BOX_EDGES.iter().enumerate() {
            canvas.segment(camera, &corners[a], &corners[b], color(&boxes[i], e));
        }
    }
    canvas.image
}

/// Box wireframes coloured by category.
pub fn rasterize_boxes_semantic(boxes: &[ObjectBox], camera: &Camera) -> Array3<f64> {
    rasterize_boxes(boxes, camera, |b, _| b.category.color())
}

/// Box wireframes with each edge coloured from [`EDGE_PALETTE`].
pub fn rasterize_boxes_orientation(boxes: &[ObjectBox], camera: &Camera) -> Array3<f64> {
    rasterize_boxes(boxes, camera, |_, e| EDGE_PALETTE[e])
}

/// Majority-rule block downsampling: an output cell is set when at least
/// half of its `factor × factor` block is set.
pub fn downsample_mask(mask: &VisibilityMask, factor: usize) -> Result<VisibilityMask> {
    let (h, w) = mask.dim();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::NonDivisibleFactor {
            factor,
            height: h,
            width: w,
        });
    }
    let out = ndarray::Array2::from_shape_fn((h / factor, w / factor), |(r, c)| {
        let block = mask.0.slice(ndarray::s![
            r * factor..(r + 1) * factor,
            c * factor..(c + 1) * factor
        ]);
        2 * block.iter().filter(|&&v| v).count() >= factor * factor
    });
    Ok(VisibilityMask(out))
}
