//! DDPM forward/reverse process with warp-consistent guidance.

pub mod denoiser;
pub mod sampler;
pub mod schedule;

pub use denoiser::{
    analytic_gaussian_denoiser, noise_to_score, score_to_noise, AnalyticGaussian, ClassifierFree,
    Concurrency, Condition, Denoiser, Prediction, DEFAULT_CFG_SCALE,
};
pub use sampler::{
    forward_sample, guided_score, predicted_clean, reverse_step, sample, sample_batch,
    sample_observed, sample_rng, sample_with_rng, GuidanceConfig, SampleShape,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
