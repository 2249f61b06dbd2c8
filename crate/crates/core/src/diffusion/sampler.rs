//! Forward noising, ancestral reverse steps, warp-consistent guidance and
//! the full sampling loop.

use ndarray::{Array3, ArrayView3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoiser::{Concurrency, Condition, Denoiser};
use super::schedule::NoiseSchedule;
use crate::consistency::{warp_loss_gradient_packed, ConsistencyConfig};
use crate::error::{Error, Result};

/// Shape of one sample, `(height, width, channels)`.
pub type SampleShape = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Strength `w ≥ 0`. Positive values push samples toward lower warp loss.
    pub scale: f64,
    pub consistency: ConsistencyConfig,
    /// Inclusive `(low, high)` timestep range guidance is applied on.
    /// `None` applies it at every step.
    #[serde(default)]
    pub step_range: Option<(usize, usize)>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scale: 0.0,
            consistency: ConsistencyConfig::default(),
            step_range: None,
        }
    }
}

impl GuidanceConfig {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            ..Self::default()
        }
    }

    pub fn with_consistency(mut self, consistency: ConsistencyConfig) -> Self {
        self.consistency = consistency;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "guidance scale must be non-negative, got {}",
                self.scale
            )));
        }
        if let Some((lo, hi)) = self.step_range {
            if lo > hi {
                return Err(Error::InvalidConfig(format!("empty guidance range {lo}..={hi}")));
            }
        }
        self.consistency.validate()
    }

    pub fn active_at(&self, t: usize) -> bool {
        self.scale != 0.0 && self.step_range.is_none_or(|(lo, hi)| (lo..=hi).contains(&t))
    }
}

fn check_same(a: &ArrayView3<f64>, b: &ArrayView3<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Closed-form marginal `x_t = √ᾱ_t·x₀ + √(1 − ᾱ_t)·ε`.
pub fn forward_sample(
    x0: ArrayView3<f64>,
    t: usize,
    noise: ArrayView3<f64>,
    schedule: &NoiseSchedule,
) -> Result<Array3<f64>> {
    schedule.check_timestep(t)?;
    check_same(&x0, &noise, "noise")?;
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(Zip::from(&x0).and(&noise).map_collect(|&x, &e| a * x + b * e))
}

/// One ancestral step: `μ = (x_t + β_t·s) / √α_t`, plus `√β̃_t·noise` for
/// `t > 1`. At `t = 1` the mean is returned and `noise` is ignored.
pub fn reverse_step(
    x_t: ArrayView3<f64>,
    t: usize,
    score: ArrayView3<f64>,
    schedule: &NoiseSchedule,
    noise: ArrayView3<f64>,
) -> Result<Array3<f64>> {
    schedule.check_timestep(t)?;
    check_same(&x_t, &score, "score")?;
    let beta = schedule.beta(t);
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    let mean = Zip::from(&x_t)
        .and(&score)
        .map_collect(|&x, &s| (x + beta * s) * inv_sqrt_alpha);
    if t == 1 {
        return Ok(mean);
    }
    check_same(&x_t, &noise, "noise")?;
    let sd = schedule.posterior_variance(t).sqrt();
    Ok(Zip::from(&mean).and(&noise).map_collect(|&m, &e| m + sd * e))
}

/// One-step clean estimate `x̂₀ = (x_t + (1 − ᾱ_t)·s) / √ᾱ_t`, the same as
/// `(x_t − √(1 − ᾱ_t)·ε̂) / √ᾱ_t`.
pub fn predicted_clean(
    x_t: ArrayView3<f64>,
    score: ArrayView3<f64>,
    schedule: &NoiseSchedule,
    t: usize,
) -> Array3<f64> {
    let ab = schedule.alpha_bar(t);
    let inv = 1.0 / ab.sqrt();
    Zip::from(&x_t)
        .and(&score)
        .map_collect(|&x, &s| (x + (1.0 - ab) * s) * inv)
}

/// Warp-consistent score adjustment.
///
/// Evaluates the warp-loss gradient at `x̂₀` against the condition, maps it
/// to `x_t` through `∂x̂₀/∂x_t = 1/√ᾱ_t` and returns `s − w·∇_{x_t}L`.
/// With `w = 0` (or outside the configured step range) the input score is
/// returned unchanged.
pub fn guided_score(
    score: &Array3<f64>,
    x_t: ArrayView3<f64>,
    condition: Option<&Condition>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
    t: usize,
) -> Result<Array3<f64>> {
    if !cfg.active_at(t) {
        return Ok(score.clone());
    }
    schedule.check_timestep(t)?;
    let cond = condition.ok_or_else(|| {
        Error::InvalidConfig("guidance scale > 0 needs a rendered condition".into())
    })?;
    let x0_hat = predicted_clean(x_t, score.view(), schedule, t);
    let grad = warp_loss_gradient_packed(
        x0_hat.view(),
        cond.target.view(),
        cond.mask.view(),
        &cfg.consistency,
    )?;
    let k = cfg.scale / schedule.alpha_bar(t).sqrt();
    Ok(Zip::from(score).and(&grad).map_collect(|&s, &g| s - k * g))
}

fn standard_normal(shape: SampleShape, rng: &mut impl Rng) -> Array3<f64> {
    Array3::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

/// Runs the reverse process from `x_T ~ N(0, I)` down to `x_0`, calling
/// `observe(t, x_t)` on each iterate (with `t = 0` for the result).
pub fn sample_observed(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: SampleShape,
    condition: Option<&Condition>,
    guidance: Option<&GuidanceConfig>,
    rng: &mut impl Rng,
    mut observe: impl FnMut(usize, &Array3<f64>),
) -> Result<Array3<f64>> {
    if let Some(g) = guidance {
        g.validate()?;
    }
    if let Some(c) = condition {
        if c.target.dim() != shape || c.mask.dim() != (shape.0, shape.1) {
            return Err(Error::DimensionMismatch(format!(
                "condition {:?} does not match sample shape {shape:?}",
                c.target.dim()
            )));
        }
    }
    let mut x = standard_normal(shape, rng);
    for t in (1..=schedule.len()).rev() {
        observe(t, &x);
        let mut score = denoiser.score(x.view(), t, schedule, condition)?;
        if let Some(g) = guidance {
            score = guided_score(&score, x.view(), condition, g, schedule, t)?;
        }
        // Draw noise on every step, including the last, so the random stream
        // does not depend on where the loop stops.
        let noise = standard_normal(shape, rng);
        x = reverse_step(x.view(), t, score.view(), schedule, noise.view())?;
    }
    observe(0, &x);
    Ok(x)
}

pub fn sample_with_rng(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: SampleShape,
    condition: Option<&Condition>,
    guidance: Option<&GuidanceConfig>,
    rng: &mut impl Rng,
) -> Result<Array3<f64>> {
    sample_observed(denoiser, schedule, shape, condition, guidance, rng, |_, _| {})
}

/// Generator used for sample `index` of a batch seeded with `seed`.
/// Index 0 uses the same stream as [`sample`].
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one sample; fully determined by `seed` and the inputs.
pub fn sample(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: SampleShape,
    condition: Option<&Condition>,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
) -> Result<Array3<f64>> {
    sample_with_rng(
        denoiser,
        schedule,
        shape,
        condition,
        guidance,
        &mut sample_rng(seed, 0),
    )
}

/// Draws `count` independent samples. Sample `i` uses stream `i` of the
/// seeded generator, so results do not depend on thread scheduling.
/// Runs in parallel unless the denoiser is single-threaded.
pub fn sample_batch(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    shape: SampleShape,
    condition: Option<&Condition>,
    guidance: Option<&GuidanceConfig>,
    seed: u64,
    count: usize,
) -> Result<Vec<Array3<f64>>> {
    let one = |i: usize| {
        sample_with_rng(
            denoiser,
            schedule,
            shape,
            condition,
            guidance,
            &mut sample_rng(seed, i as u64),
        )
    };
    match denoiser.concurrency() {
        Concurrency::Shared => (0..count).into_par_iter().map(one).collect(),
        Concurrency::SingleThreaded => (0..count).map(one).collect(),
    }
}
