//! Non-neural spine of a long-horizon RGB-D scene generator.
//!
//! Camera geometry, z-buffered point rendering, trimmed warp-consistency
//! losses, a guided DDPM sampler, keyframe selection and the autoregressive
//! generate-render-accumulate loop, plus control-image rasterisation and the
//! on-disk scene format.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod config;
pub mod consistency;
pub mod depth_codec;
pub mod diffusion;
pub mod error;
pub mod interpolation;
pub mod keyframe;
pub mod ply;
pub mod png_io;
pub mod projection;
pub mod scene_io;
pub mod synthetic;
pub mod types;

pub use conditioning::{downsample_mask, ControlImages, MapPolyline, ObjectBox, SceneControls};
pub use config::{init_thread_pool_from_env, PipelineConfig};
pub use consistency::{filter_dataset, warp_loss, warp_loss_gradient, ConsistencyConfig, LossReport};
pub use depth_codec::{DepthCodecConfig, DEFAULT_MAX_DEPTH};
pub use diffusion::{Denoiser, GuidanceConfig, NoiseSchedule};
pub use error::{Error, Result};
pub use interpolation::{refine_stub, render_interpolation_conditions, InterpolationRequest};
pub use keyframe::{
    generate_scene, order_viewpoints, select_keyframes, CopyThroughGenerator, Generator,
    KeyframeSelectionConfig, SceneState,
};
pub use projection::{back_project, merge_clouds, render_points, transform_cloud, RenderOptions, Z_NEAR};
pub use scene_io::{read_scene, write_scene};
pub use types::{
    Camera, CameraIntrinsics, PointCloud, Pose, RenderBundle, RgbdImage, Trajectory, Validate,
    VisibilityMask,
};
