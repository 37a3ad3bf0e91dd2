//! Diffusion inversion lab: DDIM dynamics over small analytic and trained
//! denoisers, latent bias optimization (LBO) for exact per-step inversion,
//! and image latent boosting (ILB) to compensate for a lossy autoencoder.
//!
//! Numerical code is generic over [`scalar::Scalar`]; the aliases below fix
//! it to `f64` or `f32`.

// `!(x > 0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod bench;
pub mod data;
pub mod denoiser;
pub mod dynamics;
pub mod error;
pub mod gradcheck;
pub mod ilb;
pub mod lbo;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod perceptual;
pub mod persist;
pub mod rng;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type NoiseScheduleF64 = schedule::NoiseSchedule<f64>;
pub type NoiseScheduleF32 = schedule::NoiseSchedule<f32>;
pub type SamplerF64<'a> = dynamics::Sampler<'a, f64>;
pub type SamplerF32<'a> = dynamics::Sampler<'a, f32>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type TrajectoryF32 = dynamics::Trajectory<f32>;
pub type ImageF64 = autoencoder::Image<f64>;
pub type ImageF32 = autoencoder::Image<f32>;
pub type LboConfigF64 = lbo::LboConfig<f64>;
pub type LboConfigF32 = lbo::LboConfig<f32>;
pub type IlbConfigF64 = ilb::IlbConfig<f64>;
pub type IlbConfigF32 = ilb::IlbConfig<f32>;
pub type MlpDenoiserF64 = denoiser::MlpDenoiser<f64>;
pub type MlpDenoiserF32 = denoiser::MlpDenoiser<f32>;
pub type LinearGaussianDenoiserF64 = denoiser::LinearGaussianDenoiser<f64>;
pub type LinearGaussianDenoiserF32 = denoiser::LinearGaussianDenoiser<f32>;
