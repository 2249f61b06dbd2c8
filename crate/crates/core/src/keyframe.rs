//! Keyframe selection along a trajectory and the autoregressive
//! render → generate → back-project loop.

use serde::{Deserialize, Serialize};

use crate::conditioning::{ControlImages, SceneControls};
use crate::consistency::{warp_loss, ConsistencyConfig};
use crate::depth_codec::{unpack_channels, DepthCodecConfig, PACKED_CHANNELS};
use crate::diffusion::{
    sample_rng, sample_with_rng, Condition, Denoiser, GuidanceConfig, NoiseSchedule,
};
use crate::error::{Error, Result};
use crate::projection::{back_project, render_points, RenderOptions};
use crate::types::{Camera, PointCloud, Pose, RenderBundle, RgbdImage, Trajectory, Validate};

/// Slack on the selection thresholds so poses sampled exactly `β` metres or
/// `γ` degrees apart are not lost to rounding.
const SELECTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSelectionConfig {
    /// Distance threshold in metres.
    pub beta: f64,
    /// View-angle threshold in degrees.
    pub gamma: f64,
}

impl Default for KeyframeSelectionConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            gamma: 20.0,
        }
    }
}

impl Validate for KeyframeSelectionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 180.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 180) degrees, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Scans the trajectory and starts a new keyframe once the camera has moved
/// at least `β` metres or turned at least `γ` degrees since the previous
/// one. Index 0 and the last pose are always included.
pub fn select_keyframes(traj: &Trajectory, cfg: &KeyframeSelectionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    traj.validate()?;
    let beta = cfg.beta * (1.0 - SELECTION_TOLERANCE);
    let gamma = cfg.gamma.to_radians() * (1.0 - SELECTION_TOLERANCE);
    let mut selected = vec![0];
    let mut last = traj.poses[0];
    for (i, pose) in traj.poses.iter().enumerate().skip(1) {
        if last.distance_to(pose) >= beta || last.rotation_angle_to(pose) >= gamma {
            selected.push(i);
            last = *pose;
        }
    }
    let end = traj.len() - 1;
    if *selected.last().unwrap() != end {
        selected.push(end);
    }
    Ok(selected)
}

/// Visit order for generation: the keyframe farthest from `start` first,
/// then repeatedly the nearest unvisited one by camera-centre distance.
/// Ties go to the lower trajectory index.
pub fn order_viewpoints(traj: &Trajectory, keyframes: &[usize], start: &Pose) -> Result<Vec<usize>> {
    if let Some(&i) = keyframes.iter().find(|&&i| i >= traj.len()) {
        return Err(Error::OutOfRangeValue(format!(
            "keyframe index {i} outside trajectory of {} poses",
            traj.len()
        )));
    }
    let mut remaining: Vec<usize> = keyframes.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    let mut order = Vec::with_capacity(remaining.len());
    let mut current: Option<Pose> = None;
    while !remaining.is_empty() {
        let pick = match current {
            None => pick_by(&remaining, |i| -start.distance_to(&traj.poses[i])),
            Some(p) => pick_by(&remaining, |i| p.distance_to(&traj.poses[i])),
        };
        let idx = remaining.remove(pick);
        current = Some(traj.poses[idx]);
        order.push(idx);
    }
    Ok(order)
}

/// Position in `sorted` of the smallest key; the first one wins ties.
fn pick_by(sorted: &[usize], key: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    for j in 1..sorted.len() {
        if key(sorted[j]) < key(sorted[best]) {
            best = j;
        }
    }
    best
}

/// Fills the holes of a rendered bundle to produce a complete keyframe.
pub trait Generator {
    fn generate(
        &mut self,
        bundle: &RenderBundle,
        camera: &Camera,
        controls: Option<&ControlImages>,
    ) -> Result<RgbdImage>;
}

impl<G: Generator + ?Sized> Generator for &mut G {
    fn generate(
        &mut self,
        bundle: &RenderBundle,
        camera: &Camera,
        controls: Option<&ControlImages>,
    ) -> Result<RgbdImage> {
        (**self).generate(bundle, camera, controls)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(
        &mut self,
        bundle: &RenderBundle,
        camera: &Camera,
        controls: Option<&ControlImages>,
    ) -> Result<RgbdImage> {
        (**self).generate(bundle, camera, controls)
    }
}

/// Mid gray that survives an 8-bit round trip unchanged.
pub const STUB_GRAY: f64 = 128.0 / 255.0;

/// Keeps every rendered pixel and fills holes with constant gray at the
/// codec's maximum depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopyThroughGenerator {
    pub fill_color: [f64; 3],
    pub fill_depth: f64,
}

impl Default for CopyThroughGenerator {
    fn default() -> Self {
        Self::new(&DepthCodecConfig::default())
    }
}

impl CopyThroughGenerator {
    pub fn new(codec: &DepthCodecConfig) -> Self {
        Self {
            fill_color: [STUB_GRAY; 3],
            fill_depth: codec.max_depth,
        }
    }
}

impl Generator for CopyThroughGenerator {
    fn generate(
        &mut self,
        bundle: &RenderBundle,
        camera: &Camera,
        _controls: Option<&ControlImages>,
    ) -> Result<RgbdImage> {
        bundle.image.check_dims(&camera.intrinsics)?;
        let mut out = bundle.image.clone();
        for ((r, c), &visible) in bundle.mask.0.indexed_iter() {
            if !visible {
                out.set_color(r, c, self.fill_color);
                out.depth[(r, c)] = self.fill_depth;
            }
        }
        Ok(out)
    }
}

/// Runs the guided sampler in packed RGB-D space, conditioned on the
/// rendered bundle. Guidance is skipped for views with no overlap.
pub struct DiffusionGenerator<D> {
    pub denoiser: D,
    pub schedule: NoiseSchedule,
    pub guidance: GuidanceConfig,
    pub codec: DepthCodecConfig,
    pub seed: u64,
    calls: u64,
}

impl<D: Denoiser> DiffusionGenerator<D> {
    pub fn new(
        denoiser: D,
        schedule: NoiseSchedule,
        guidance: GuidanceConfig,
        codec: DepthCodecConfig,
        seed: u64,
    ) -> Self {
        Self {
            denoiser,
            schedule,
            guidance,
            codec,
            seed,
            calls: 0,
        }
    }
}

impl<D: Denoiser> Generator for DiffusionGenerator<D> {
    fn generate(
        &mut self,
        bundle: &RenderBundle,
        camera: &Camera,
        _controls: Option<&ControlImages>,
    ) -> Result<RgbdImage> {
        bundle.image.check_dims(&camera.intrinsics)?;
        let condition = Condition::from_bundle(bundle, &self.codec)?;
        let guidance = (condition.overlap() > 0).then_some(&self.guidance);
        let (h, w) = bundle.dim();
        let mut rng = sample_rng(self.seed, self.calls);
        self.calls += 1;
        let x = sample_with_rng(
            &self.denoiser,
            &self.schedule,
            (h, w, PACKED_CHANNELS),
            Some(&condition),
            guidance,
            &mut rng,
        )?;
        unpack_channels(&x, &self.codec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub trajectory_index: usize,
    pub camera: Camera,
    pub image: RgbdImage,
    /// Render of the accumulated cloud this keyframe was generated from;
    /// `None` for the initial frame.
    pub bundle: Option<RenderBundle>,
    /// Untrimmed warp loss between the keyframe and its bundle; `None` for
    /// the initial frame or when the bundle was empty.
    pub warp_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    /// Keyframes in generation order; the initial frame comes first.
    pub keyframes: Vec<Keyframe>,
    pub cloud: PointCloud,
}

impl SceneState {
    pub fn new() -> Self {
        Self {
            keyframes: Vec::new(),
            cloud: PointCloud::new(),
        }
    }

    /// Trajectory indices in generation order.
    pub fn visit_order(&self) -> Vec<usize> {
        self.keyframes.iter().map(|k| k.trajectory_index).collect()
    }

    /// Back-projects `keyframe` into the cloud (tagged with its position in
    /// the keyframe list) and records it.
    pub fn push(&mut self, keyframe: Keyframe) -> Result<()> {
        let points = back_project(&keyframe.image, &keyframe.camera, self.keyframes.len())?;
        self.cloud.extend_from(&points);
        self.keyframes.push(keyframe);
        Ok(())
    }
}

impl Default for SceneState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SceneOptions {
    pub render: RenderOptions,
    pub codec: DepthCodecConfig,
}

/// The autoregressive loop.
///
/// Back-projects `initial` (seen from trajectory pose `initial_index`, which
/// must be an endpoint), then visits the remaining keyframes from the far
/// end back toward the start. Each step renders the accumulated cloud,
/// lets `generator` complete the view and merges the result.
pub fn generate_scene(
    initial: &RgbdImage,
    initial_index: usize,
    traj: &Trajectory,
    keyframes: &[usize],
    generator: &mut dyn Generator,
    controls: Option<&SceneControls>,
    opts: &SceneOptions,
) -> Result<SceneState> {
    traj.validate()?;
    if initial_index != 0 && initial_index + 1 != traj.len() {
        return Err(Error::InvalidConfig(format!(
            "initial frame must sit at a trajectory endpoint, got index {initial_index}"
        )));
    }
    initial.validate()?;
    if let Some(c) = controls {
        c.validate()?;
    }
    let start = traj.camera(initial_index);
    let mut scene = SceneState::new();
    scene.push(Keyframe {
        trajectory_index: initial_index,
        camera: start,
        image: initial.clone(),
        bundle: None,
        warp_loss: None,
    })?;

    let pending: Vec<usize> = keyframes.iter().copied().filter(|&i| i != initial_index).collect();
    let loss_cfg = ConsistencyConfig {
        codec: opts.codec,
        ..ConsistencyConfig::untrimmed()
    };
    for index in order_viewpoints(traj, &pending, &start.pose)? {
        let camera = traj.camera(index);
        let bundle = render_points(&scene.cloud, &camera, &opts.render);
        let control_images = controls.map(|c| c.rasterize(&camera));
        let image = generator
            .generate(&bundle, &camera, control_images.as_ref())
            .and_then(|img| {
                img.check_dims(&camera.intrinsics)?;
                img.validate()?;
                Ok(img)
            })
            .map_err(|e| Error::GeneratorFailure {
                index,
                source: Box::new(e),
            })?;
        let loss = match warp_loss(&image, &bundle.image, &bundle.mask, &loss_cfg) {
            Ok(r) => Some(r.loss),
            Err(Error::EmptyOverlap) => None,
            Err(e) => return Err(e),
        };
        scene.push(Keyframe {
            trajectory_index: index,
            camera,
            image,
            bundle: Some(bundle),
            warp_loss: loss,
        })?;
    }
    Ok(scene)
}
