//! Command-line front end. Exit status: 0 on success, 1 on a domain error
//! (reported as JSON on stderr), 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use scapegeom::conditioning::SceneControls;
use scapegeom::config::{GeneratorChoice, PipelineConfig, ScheduleConfig};
use scapegeom::consistency::{filter_dataset, warp_loss, ConsistencyConfig};
use scapegeom::depth_codec::{DepthCodecConfig, PACKED_CHANNELS};
use scapegeom::diffusion::{
    analytic_gaussian_denoiser, sample_batch, Condition, GuidanceConfig, ScheduleKind,
};
use scapegeom::interpolation::{refine_stub, render_interpolation_conditions, InterpolationRequest};
use scapegeom::keyframe::{generate_scene, select_keyframes, KeyframeSelectionConfig, SceneOptions};
use scapegeom::ply::{read_ply_file, write_ply_file};
use scapegeom::png_io::{read_depth16, read_mask, read_rgb8, write_depth16, write_mask, write_rgb8};
use scapegeom::projection::{back_project, render_points, RenderOptions};
use scapegeom::scene_io::write_scene;
use scapegeom::synthetic::Corridor;
use scapegeom::{
    Camera, Error, RenderBundle, RgbdImage, Trajectory, Validate, VisibilityMask,
};

#[derive(Parser, Debug)]
#[command(name = "scapegeom", version, about = "Geometry and guidance tools for RGB-D scene generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lift an RGB-D image to a world-frame PLY point cloud.
    Backproject(BackprojectArgs),
    /// Render a PLY point cloud at a camera into rgb/depth/mask PNGs.
    Render(RenderArgs),
    /// Trimmed warp-consistency loss between two RGB-D images.
    Loss(LossArgs),
    /// Drop the highest-loss fraction of a dataset.
    Filter(FilterArgs),
    /// Keyframe indices along a trajectory.
    SelectKeyframes(SelectArgs),
    /// Run the autoregressive keyframe pipeline.
    Pipeline(PipelineArgs),
    /// Rasterise map polylines and boxes into control images.
    Rasterize(RasterizeArgs),
    /// Render and hole-fill interpolation frames between two keyframes.
    Interpolate(InterpolateArgs),
    /// Draw samples with the analytic Gaussian denoiser.
    Sample(SampleArgs),
    /// Write a synthetic corridor scene and trajectory.
    SynthCorridor(SynthArgs),
}

#[derive(Args, Debug)]
struct CodecArgs {
    /// Depth encoded as 65535 in 16-bit PNGs, in metres.
    #[arg(long, default_value_t = scapegeom::DEFAULT_MAX_DEPTH)]
    max_depth: f64,
}

impl CodecArgs {
    fn codec(&self) -> Result<DepthCodecConfig, Error> {
        DepthCodecConfig::new(self.max_depth)
    }
}

#[derive(Args, Debug)]
struct BackprojectArgs {
    #[arg(long)]
    rgb: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    /// Camera JSON.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Directory receiving rgb.png, depth.png and mask.png.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    splat_radius: usize,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args, Debug)]
struct LossArgs {
    #[arg(long)]
    x_rgb: PathBuf,
    #[arg(long)]
    x_depth: PathBuf,
    #[arg(long)]
    h_rgb: PathBuf,
    #[arg(long)]
    h_depth: PathBuf,
    /// Mask PNG; every pixel counts when omitted.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = scapegeom::consistency::DEFAULT_TRIM_FRACTION)]
    trim: f64,
    #[arg(long, default_value_t = 1.0)]
    depth_weight: f64,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// JSON array of per-sample losses.
    #[arg(long)]
    losses: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    drop: f64,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Distance threshold in metres.
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    /// View-angle threshold in degrees.
    #[arg(long, default_value_t = 20.0)]
    gamma: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeneratorKind {
    CopyThrough,
    GaussianDiffusion,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Scene JSON naming the initial frame's images.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pipeline configuration JSON; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Map polylines and boxes JSON.
    #[arg(long)]
    controls: Option<PathBuf>,
    /// Overrides the generator named in the configuration.
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Required for stochastic generators.
    #[arg(long)]
    seed: Option<u64>,
}

/// Initial frame description used by `pipeline`. Paths are relative to the
/// JSON file.
#[derive(Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub rgb: PathBuf,
    pub depth: PathBuf,
    #[serde(default)]
    pub initial_index: usize,
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    #[arg(long)]
    controls: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Directory receiving map.png, semantic_boxes.png and orientation_boxes.png.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct InterpolateArgs {
    /// Directory holding the first keyframe's rgb.png and depth.png.
    #[arg(long)]
    first: PathBuf,
    #[arg(long)]
    second: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    first_index: usize,
    #[arg(long)]
    second_index: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    Linear,
    ScaledLinear,
    Cosine,
}

impl From<ScheduleArg> for ScheduleKind {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Linear => ScheduleKind::Linear,
            ScheduleArg::ScaledLinear => ScheduleKind::ScaledLinear,
            ScheduleArg::Cosine => ScheduleKind::Cosine,
        }
    }
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    seed: u64,
    /// Number of diffusion steps T.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Linear)]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = scapegeom::diffusion::schedule::DEFAULT_BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = scapegeom::diffusion::schedule::DEFAULT_BETA_END)]
    beta_end: f64,
    /// Guidance scale.
    #[arg(long, default_value_t = 0.0)]
    w: f64,
    #[arg(long, default_value_t = scapegeom::consistency::DEFAULT_TRIM_FRACTION)]
    trim: f64,
    /// Mean of the Gaussian data distribution.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    width: usize,
    /// Directory with cond_rgb.png, cond_depth.png and mask.png to guide toward.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Include every sample in the output, not only summary statistics.
    #[arg(long)]
    emit_samples: bool,
    #[command(flatten)]
    codec: CodecArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 31)]
    poses: usize,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 24)]
    height: usize,
}

enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Domain(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = scapegeom::init_thread_pool_from_env() {
        report(&e);
        return 1;
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Domain(e)) => {
            report(&e);
            1
        }
    }
}

fn report(e: &Error) {
    eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Backproject(a) => backproject(a),
        Command::Render(a) => render(a),
        Command::Loss(a) => loss(a),
        Command::Filter(a) => filter(a),
        Command::SelectKeyframes(a) => select(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Rasterize(a) => rasterize(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Sample(a) => sample(a),
        Command::SynthCorridor(a) => synth(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()).into());
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn read_camera(path: &Path) -> CliResult<Camera> {
    let cam: Camera = read_json(path)?;
    cam.validate()?;
    Ok(cam)
}

fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    let traj: Trajectory = read_json(path)?;
    traj.validate()?;
    Ok(traj)
}

fn read_rgbd(rgb: &Path, depth: &Path, codec: &DepthCodecConfig) -> CliResult<RgbdImage> {
    Ok(RgbdImage::new(read_rgb8(rgb)?, read_depth16(depth, codec)?)?)
}

fn print_json(value: &impl Serialize) -> CliResult {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn write_bundle(dir: &Path, bundle: &RenderBundle, codec: &DepthCodecConfig) -> CliResult {
    fs::create_dir_all(dir)?;
    write_rgb8(dir.join("rgb.png"), &bundle.image.rgb)?;
    write_depth16(dir.join("depth.png"), &bundle.image.depth, codec)?;
    write_mask(dir.join("mask.png"), &bundle.mask)?;
    Ok(())
}

fn backproject(a: BackprojectArgs) -> CliResult {
    let codec = a.codec.codec()?;
    let camera = read_camera(&a.camera)?;
    let image = read_rgbd(&a.rgb, &a.depth, &codec)?;
    let cloud = back_project(&image, &camera, 0)?;
    write_ply_file(&cloud, &a.out)?;
    print_json(&json!({ "points": cloud.len() }))
}

fn render(a: RenderArgs) -> CliResult {
    let codec = a.codec.codec()?;
    let camera = read_camera(&a.camera)?;
    let cloud = read_ply_file(&a.cloud)?;
    let opts = RenderOptions {
        splat_radius: a.splat_radius,
        ..RenderOptions::default()
    };
    let bundle = render_points(&cloud, &camera, &opts);
    write_bundle(&a.out_dir, &bundle, &codec)?;
    print_json(&json!({ "visible_pixels": bundle.mask.count() }))
}

fn loss(a: LossArgs) -> CliResult {
    let codec = a.codec.codec()?;
    let x = read_rgbd(&a.x_rgb, &a.x_depth, &codec)?;
    let h = read_rgbd(&a.h_rgb, &a.h_depth, &codec)?;
    let mask = match &a.mask {
        Some(p) => read_mask(p)?,
        None => VisibilityMask::full(x.height(), x.width()),
    };
    let cfg = ConsistencyConfig {
        trim_fraction: a.trim,
        depth_weight: a.depth_weight,
        codec,
    };
    cfg.validate()?;
    let report = warp_loss(&x, &h, &mask, &cfg)?;
    print_json(&report)
}

fn filter(a: FilterArgs) -> CliResult {
    let losses: Vec<f64> = read_json(&a.losses)?;
    let kept = filter_dataset(&losses, a.drop)?;
    print_json(&kept)
}

fn select(a: SelectArgs) -> CliResult {
    let traj = read_trajectory(&a.trajectory)?;
    let cfg = KeyframeSelectionConfig {
        beta: a.beta,
        gamma: a.gamma,
    };
    print_json(&select_keyframes(&traj, &cfg)?)
}

fn pipeline(a: PipelineArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_json(&fs::read_to_string(p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Domain(Error::MissingFile(p.clone()))
            } else {
                e.into()
            }
        })?)?,
        None => PipelineConfig::default(),
    };
    match a.generator {
        Some(GeneratorKind::CopyThrough) => cfg.generator = GeneratorChoice::CopyThrough,
        Some(GeneratorKind::GaussianDiffusion) => {
            let (mu, sigma) = match cfg.generator {
                GeneratorChoice::GaussianDiffusion { mu, sigma, .. } => (mu, sigma),
                GeneratorChoice::CopyThrough => (0.5, 0.25),
            };
            cfg.generator = GeneratorChoice::GaussianDiffusion { mu, sigma, seed: 0 };
        }
        None => {}
    }
    if let GeneratorChoice::GaussianDiffusion { seed, .. } = &mut cfg.generator {
        *seed = a
            .seed
            .ok_or_else(|| CliError::Usage("the gaussian-diffusion generator needs --seed".into()))?;
    }
    cfg.validate()?;

    let scene_file: SceneFile = read_json(&a.scene)?;
    let base = a.scene.parent().unwrap_or(Path::new("."));
    let initial = read_rgbd(&base.join(&scene_file.rgb), &base.join(&scene_file.depth), &cfg.codec)?;
    let traj = read_trajectory(&a.trajectory)?;
    let controls = match &a.controls {
        Some(p) => Some(read_json::<SceneControls>(p)?),
        None => None,
    };
    let keyframes = select_keyframes(&traj, &cfg.selection)?;
    let mut generator = cfg.make_generator()?;
    let opts = SceneOptions {
        render: RenderOptions {
            splat_radius: cfg.splat_radius,
            ..RenderOptions::default()
        },
        codec: cfg.codec,
    };
    let scene = generate_scene(
        &initial,
        scene_file.initial_index,
        &traj,
        &keyframes,
        generator.as_mut(),
        controls.as_ref(),
        &opts,
    )?;
    let manifest = write_scene(&scene, &a.out, &cfg.codec)?;
    let losses: Vec<Option<f64>> = manifest.keyframes.iter().map(|k| k.warp_loss).collect();
    print_json(&json!({
        "keyframes": keyframes,
        "visit_order": manifest.visit_order,
        "warp_losses": losses,
        "points": scene.cloud.len(),
    }))
}

fn rasterize(a: RasterizeArgs) -> CliResult {
    let controls: SceneControls = read_json(&a.controls)?;
    controls.validate()?;
    let camera = read_camera(&a.camera)?;
    let images = controls.rasterize(&camera);
    fs::create_dir_all(&a.out_dir)?;
    write_rgb8(a.out_dir.join("map.png"), &images.map_image)?;
    write_rgb8(a.out_dir.join("semantic_boxes.png"), &images.semantic_box_image)?;
    write_rgb8(a.out_dir.join("orientation_boxes.png"), &images.orientation_box_image)?;
    print_json(&json!({ "polylines": controls.polylines.len(), "boxes": controls.boxes.len() }))
}

fn interpolate(a: InterpolateArgs) -> CliResult {
    let codec = a.codec.codec()?;
    let traj = read_trajectory(&a.trajectory)?;
    let load = |dir: &Path| read_rgbd(&dir.join("rgb.png"), &dir.join("depth.png"), &codec);
    let req = InterpolationRequest::from_trajectory(
        &traj,
        a.first_index,
        load(&a.first)?,
        a.second_index,
        load(&a.second)?,
    )?;
    let frames = render_interpolation_conditions(&req, &RenderOptions::default())?;
    let refined = refine_stub(&frames);
    fs::create_dir_all(&a.out)?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, (frame, out)) in frames.iter().zip(&refined).enumerate() {
        let names = [
            format!("frame_{i:03}_cond_rgb.png"),
            format!("frame_{i:03}_mask.png"),
            format!("frame_{i:03}_rgb.png"),
        ];
        write_rgb8(a.out.join(&names[0]), frame.rgb())?;
        write_mask(a.out.join(&names[1]), frame.mask())?;
        write_rgb8(a.out.join(&names[2]), &out.rgb)?;
        entries.push(json!({
            "camera": req.cameras[i],
            "cond_rgb": names[0],
            "mask": names[1],
            "rgb": names[2],
            "visible_pixels": frame.mask().count(),
        }));
    }
    let manifest = json!({
        "first_index": a.first_index,
        "second_index": a.second_index,
        "frames": entries,
    });
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    print_json(&json!({ "frames": frames.len() }))
}

fn sample(a: SampleArgs) -> CliResult {
    let codec = a.codec.codec()?;
    let schedule = ScheduleConfig {
        kind: a.schedule.into(),
        steps: a.steps,
        beta_start: a.beta_start,
        beta_end: a.beta_end,
    }
    .build()?;
    let denoiser = analytic_gaussian_denoiser(a.mu, a.sigma)?;
    let condition = match &a.bundle {
        Some(dir) => {
            let bundle = RenderBundle {
                image: read_rgbd(&dir.join("cond_rgb.png"), &dir.join("cond_depth.png"), &codec)?,
                mask: read_mask(dir.join("mask.png"))?,
            };
            Some(Condition::from_bundle(&bundle, &codec)?)
        }
        None => None,
    };
    let shape = match &condition {
        Some(c) => c.target.dim(),
        None => (a.height, a.width, PACKED_CHANNELS),
    };
    let guidance = GuidanceConfig {
        scale: a.w,
        consistency: ConsistencyConfig {
            trim_fraction: a.trim,
            codec,
            ..ConsistencyConfig::default()
        },
        step_range: None,
    };
    if a.w > 0.0 && condition.is_none() {
        return Err(CliError::Usage("--w > 0 needs --bundle".into()));
    }
    let samples = sample_batch(
        &denoiser,
        &schedule,
        shape,
        condition.as_ref(),
        Some(&guidance),
        a.seed,
        a.count,
    )?;
    let values: Vec<f64> = samples.iter().flat_map(|s| s.iter().copied()).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut out = json!({
        "count": samples.len(),
        "shape": [shape.0, shape.1, shape.2],
        "mean": mean,
        "variance": variance,
    });
    if a.emit_samples {
        let arrays: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().copied().collect()).collect();
        out["samples"] = json!(arrays);
    }
    print_json(&out)
}

fn synth(a: SynthArgs) -> CliResult {
    let corridor = Corridor {
        width: a.width,
        height: a.height,
        poses: a.poses,
        spacing: a.spacing,
        focal: a.width as f64 / 2.0,
        ..Corridor::default()
    };
    let (traj, initial) = corridor.build()?;
    fs::create_dir_all(&a.out)?;
    let codec = DepthCodecConfig::default();
    write_rgb8(a.out.join("initial_rgb.png"), &initial.rgb)?;
    write_depth16(a.out.join("initial_depth.png"), &initial.depth, &codec)?;
    fs::write(a.out.join("trajectory.json"), serde_json::to_string_pretty(&traj)?)?;
    fs::write(
        a.out.join("camera.json"),
        serde_json::to_string_pretty(&traj.camera(0))?,
    )?;
    let scene = SceneFile {
        rgb: "initial_rgb.png".into(),
        depth: "initial_depth.png".into(),
        initial_index: 0,
    };
    fs::write(a.out.join("scene.json"), serde_json::to_string_pretty(&scene)?)?;
    print_json(&json!({ "poses": traj.len(), "width": a.width, "height": a.height }))
}
