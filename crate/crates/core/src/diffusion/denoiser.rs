use ndarray::{Array2, Array3, ArrayView3};

use super::schedule::NoiseSchedule;
use crate::depth_codec::{pack_channels, DepthCodecConfig};
use crate::error::{Error, Result};
use crate::types::RenderBundle;

/// Rendered keyframe points in packed sample space, plus their mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub target: Array3<f64>,
    pub mask: Array2<bool>,
}

impl Condition {
    pub fn from_bundle(bundle: &RenderBundle, codec: &DepthCodecConfig) -> Result<Self> {
        Ok(Self {
            target: pack_channels(&bundle.image, codec)?,
            mask: bundle.mask.0.clone(),
        })
    }

    pub fn overlap(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// What a denoiser returns: a score `∇ log p_t(x)` or a noise estimate `ε̂`.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Score(Array3<f64>),
    Noise(Array3<f64>),
}

impl Prediction {
    pub fn into_score(self, alpha_bar: f64) -> Array3<f64> {
        match self {
            Prediction::Score(s) => s,
            Prediction::Noise(eps) => noise_to_score(&eps, alpha_bar),
        }
    }
}

/// `s = −ε̂ / √(1 − ᾱ_t)`.
pub fn noise_to_score(eps: &Array3<f64>, alpha_bar: f64) -> Array3<f64> {
    let k = (1.0 - alpha_bar).sqrt();
    eps.mapv(|e| -e / k)
}

/// `ε̂ = −√(1 − ᾱ_t) · s`.
pub fn score_to_noise(score: &Array3<f64>, alpha_bar: f64) -> Array3<f64> {
    let k = (1.0 - alpha_bar).sqrt();
    score.mapv(|s| -s * k)
}

/// Whether a denoiser may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Shared,
    SingleThreaded,
}

/// A score model `s_θ(x_t, t, condition)`.
pub trait Denoiser: Send + Sync {
    fn predict(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        condition: Option<&Condition>,
    ) -> Result<Prediction>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Shared
    }

    /// Score estimate, converting noise predictions and checking the shape.
    fn score(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        condition: Option<&Condition>,
    ) -> Result<Array3<f64>> {
        schedule.check_timestep(t)?;
        let s = self
            .predict(x, t, schedule, condition)?
            .into_score(schedule.alpha_bar(t));
        if s.dim() != x.dim() {
            return Err(Error::DimensionMismatch(format!(
                "denoiser returned {:?} for input {:?}",
                s.dim(),
                x.dim()
            )));
        }
        Ok(s)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        condition: Option<&Condition>,
    ) -> Result<Prediction> {
        (**self).predict(x, t, schedule, condition)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        condition: Option<&Condition>,
    ) -> Result<Prediction> {
        (**self).predict(x, t, schedule, condition)
    }

    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// Exact score of data distributed as `N(μ, σ²I)` after diffusion:
/// `s(x_t, t) = −(x_t − √ᾱ_t·μ) / (ᾱ_t·σ² + 1 − ᾱ_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticGaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl AnalyticGaussian {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Gaussian oracle needs finite mu and sigma > 0, got mu={mu} sigma={sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn score_at(&self, x: f64, alpha_bar: f64) -> f64 {
        let var = alpha_bar * self.sigma * self.sigma + 1.0 - alpha_bar;
        -(x - alpha_bar.sqrt() * self.mu) / var
    }
}

/// Builds the analytic Gaussian denoiser used as a correctness oracle.
pub fn analytic_gaussian_denoiser(mu: f64, sigma: f64) -> Result<AnalyticGaussian> {
    AnalyticGaussian::new(mu, sigma)
}

impl Denoiser for AnalyticGaussian {
    fn predict(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        _condition: Option<&Condition>,
    ) -> Result<Prediction> {
        let ab = schedule.alpha_bar(t);
        Ok(Prediction::Score(x.mapv(|v| self.score_at(v, ab))))
    }
}

/// Classifier-free guidance over any denoiser:
/// `s = s(x, ∅) + g · (s(x, c) − s(x, ∅))`.
/// Without a condition the inner unconditional score passes through.
#[derive(Debug, Clone)]
pub struct ClassifierFree<D> {
    pub inner: D,
    pub scale: f64,
}

/// Guidance strength used by common latent-diffusion defaults.
pub const DEFAULT_CFG_SCALE: f64 = 7.5;

impl<D: Denoiser> ClassifierFree<D> {
    pub fn new(inner: D, scale: f64) -> Self {
        Self { inner, scale }
    }
}

impl<D: Denoiser> Denoiser for ClassifierFree<D> {
    fn predict(
        &self,
        x: ArrayView3<f64>,
        t: usize,
        schedule: &NoiseSchedule,
        condition: Option<&Condition>,
    ) -> Result<Prediction> {
        let uncond = self.inner.score(x, t, schedule, None)?;
        let Some(cond) = condition else {
            return Ok(Prediction::Score(uncond));
        };
        let cond = self.inner.score(x, t, schedule, Some(cond))?;
        Ok(Prediction::Score(&uncond + &((&cond - &uncond) * self.scale)))
    }

    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }
}
