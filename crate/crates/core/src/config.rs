//! End-to-end configuration and process-level settings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::consistency::ConsistencyConfig;
use crate::depth_codec::DepthCodecConfig;
use crate::diffusion::{
    analytic_gaussian_denoiser, GuidanceConfig, NoiseSchedule, ScheduleKind,
};
use crate::diffusion::schedule::{DEFAULT_BETA_END, DEFAULT_BETA_START};
use crate::error::{Error, Result};
use crate::keyframe::{CopyThroughGenerator, DiffusionGenerator, Generator, KeyframeSelectionConfig};
use crate::types::Validate;

/// Environment variable capping the worker pool; `0` or unset means one
/// worker per core.
pub const THREADS_ENV: &str = "SCAPEGEOM_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`]. Returns the requested
/// thread count, or `None` when left automatic. Calling it after the pool
/// has started is harmless; the first configuration wins.
pub fn init_thread_pool_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Error::InvalidConfig(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}"))
    })?;
    if n == 0 {
        return Ok(None);
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            steps: 1000,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.kind, self.steps, self.beta_start, self.beta_end)
    }
}

/// Which keyframe generator the pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorChoice {
    #[default]
    CopyThrough,
    /// Guided sampling with the analytic Gaussian denoiser.
    GaussianDiffusion { mu: f64, sigma: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinerChoice {
    #[default]
    NearestFill,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub scene: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub controls: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub selection: KeyframeSelectionConfig,
    pub consistency: ConsistencyConfig,
    pub guidance: GuidanceConfig,
    pub schedule: ScheduleConfig,
    pub codec: DepthCodecConfig,
    pub generator: GeneratorChoice,
    pub refiner: RefinerChoice,
    pub splat_radius: usize,
    pub paths: PathsConfig,
}

impl Validate for PipelineConfig {
    fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.consistency.validate()?;
        self.guidance.validate()?;
        DepthCodecConfig::new(self.codec.max_depth)?;
        if let GeneratorChoice::GaussianDiffusion { mu, sigma, .. } = self.generator {
            analytic_gaussian_denoiser(mu, sigma)?;
            self.schedule.build()?;
        }
        Ok(())
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn make_generator(&self) -> Result<Box<dyn Generator>> {
        Ok(match self.generator {
            GeneratorChoice::CopyThrough => Box::new(CopyThroughGenerator::new(&self.codec)),
            GeneratorChoice::GaussianDiffusion { mu, sigma, seed } => Box::new(DiffusionGenerator::new(
                analytic_gaussian_denoiser(mu, sigma)?,
                self.schedule.build()?,
                GuidanceConfig {
                    consistency: ConsistencyConfig {
                        codec: self.codec,
                        ..self.guidance.consistency
                    },
                    ..self.guidance
                },
                self.codec,
                seed,
            )),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_json() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.selection.beta, 10.0);
        assert_eq!(cfg.consistency.trim_fraction, 0.05);
        assert_eq!(cfg.codec.max_depth, 300.0);
    }

    #[test]
    fn generator_choice_json() {
        let cfg = PipelineConfig::from_json(
            r#"{"generator":{"kind":"gaussian-diffusion","mu":0.5,"sigma":0.2,"seed":3},
                "schedule":{"steps":10}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.generator, GeneratorChoice::GaussianDiffusion { seed: 3, .. }));
        cfg.make_generator().unwrap();
        assert!(PipelineConfig::from_json(r#"{"selection":{"beta":-1,"gamma":20}}"#).is_err());
    }
}
