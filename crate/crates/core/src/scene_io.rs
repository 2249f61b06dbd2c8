//! On-disk scene layout.
//!
//! ```text
//! out/
//!   manifest.json
//!   scene.ply
//!   keyframes/kf_000/{rgb.png, depth.png, camera.json}
//!   keyframes/kf_001/{rgb.png, depth.png, mask.png, cond_rgb.png, cond_depth.png, camera.json}
//! ```
//!
//! Keyframes are numbered in generation order. Condition images exist for
//! every keyframe except the initial frame.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth_codec::DepthCodecConfig;
use crate::error::{Error, Result};
use crate::keyframe::{Keyframe, SceneState};
use crate::ply::{read_ply_file, write_ply_file};
use crate::png_io::{read_depth16, read_mask, read_rgb8, write_depth16, write_mask, write_rgb8};
use crate::types::{Camera, RenderBundle, RgbdImage, Validate};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLOUD_FILE: &str = "scene.ply";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub format_version: u32,
    pub codec: DepthCodecConfig,
    /// Trajectory indices in generation order.
    pub visit_order: Vec<usize>,
    pub cloud: String,
    pub keyframes: Vec<KeyframeEntry>,
}

/// One keyframe; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeEntry {
    pub trajectory_index: usize,
    pub camera: Camera,
    pub rgb: String,
    pub depth: String,
    pub camera_file: String,
    #[serde(default)]
    pub condition: Option<ConditionEntry>,
    pub warp_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub rgb: String,
    pub depth: String,
    pub mask: String,
}

fn keyframe_dir(i: usize) -> String {
    format!("keyframes/kf_{i:03}")
}

/// Writes `scene` under `dir`, creating it if needed.
pub fn write_scene(
    scene: &SceneState,
    dir: impl AsRef<Path>,
    codec: &DepthCodecConfig,
) -> Result<SceneManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(scene.keyframes.len());
    for (i, kf) in scene.keyframes.iter().enumerate() {
        let sub = keyframe_dir(i);
        fs::create_dir_all(dir.join(&sub))?;
        let rel = |name: &str| format!("{sub}/{name}");
        write_rgb8(dir.join(rel("rgb.png")), &kf.image.rgb)?;
        write_depth16(dir.join(rel("depth.png")), &kf.image.depth, codec)?;
        fs::write(
            dir.join(rel("camera.json")),
            serde_json::to_string_pretty(&kf.camera)?,
        )?;
        let condition = match &kf.bundle {
            Some(b) => {
                write_rgb8(dir.join(rel("cond_rgb.png")), &b.image.rgb)?;
                write_depth16(dir.join(rel("cond_depth.png")), &b.image.depth, codec)?;
                write_mask(dir.join(rel("mask.png")), &b.mask)?;
                Some(ConditionEntry {
                    rgb: rel("cond_rgb.png"),
                    depth: rel("cond_depth.png"),
                    mask: rel("mask.png"),
                })
            }
            None => None,
        };
        entries.push(KeyframeEntry {
            trajectory_index: kf.trajectory_index,
            camera: kf.camera,
            rgb: rel("rgb.png"),
            depth: rel("depth.png"),
            camera_file: rel("camera.json"),
            condition,
            warp_loss: kf.warp_loss,
        });
    }
    write_ply_file(&scene.cloud, dir.join(CLOUD_FILE))?;
    let manifest = SceneManifest {
        format_version: FORMAT_VERSION,
        codec: *codec,
        visit_order: scene.visit_order(),
        cloud: CLOUD_FILE.to_string(),
        keyframes: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Parses and checks `dir/manifest.json` without touching the images.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let corrupt = |reason: String| Error::CorruptManifest {
        path: path.clone(),
        reason,
    };
    let text = fs::read_to_string(&path)?;
    let manifest: SceneManifest = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let order: Vec<usize> = manifest.keyframes.iter().map(|k| k.trajectory_index).collect();
    if order != manifest.visit_order {
        return Err(corrupt("visit_order disagrees with keyframe list".into()));
    }
    DepthCodecConfig::new(manifest.codec.max_depth).map_err(|e| corrupt(e.to_string()))?;
    Ok(manifest)
}

fn resolve(dir: &Path, rel: &str) -> Result<PathBuf> {
    let p = dir.join(rel);
    if !p.exists() {
        return Err(Error::MissingFile(p));
    }
    Ok(p)
}

/// Loads a scene written by [`write_scene`]. Colours come back bit-exact
/// when they were multiples of 1/255; depths are within the codec's
/// quantisation error. The cloud is rebuilt by back-projecting the stored
/// keyframes and checked against the PLY's point count.
pub fn read_scene(dir: impl AsRef<Path>) -> Result<SceneState> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let codec = manifest.codec;
    let mut scene = SceneState::new();
    for entry in &manifest.keyframes {
        entry.camera.validate()?;
        let image = RgbdImage::new(
            read_rgb8(resolve(dir, &entry.rgb)?)?,
            read_depth16(resolve(dir, &entry.depth)?, &codec)?,
        )?;
        let bundle = match &entry.condition {
            Some(c) => Some(RenderBundle {
                image: RgbdImage::new(
                    read_rgb8(resolve(dir, &c.rgb)?)?,
                    read_depth16(resolve(dir, &c.depth)?, &codec)?,
                )?,
                mask: read_mask(resolve(dir, &c.mask)?)?,
            }),
            None => None,
        };
        scene.push(Keyframe {
            trajectory_index: entry.trajectory_index,
            camera: entry.camera,
            image,
            bundle,
            warp_loss: entry.warp_loss,
        })?;
    }
    let stored = read_ply_file(resolve(dir, &manifest.cloud)?)?;
    if stored.len() != scene.cloud.len() {
        return Err(Error::CorruptManifest {
            path: dir.join(MANIFEST_FILE),
            reason: format!(
                "{} holds {} points but the keyframes back-project to {}",
                manifest.cloud,
                stored.len(),
                scene.cloud.len()
            ),
        });
    }
    Ok(scene)
}
