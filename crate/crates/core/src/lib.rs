//! Desk-scale laboratory for differentially private diffusion training.
//!
//! The crate trains a small σ-conditioned denoiser in two phases: a
//! non-private phase on programmatically generated synthetic data restricted
//! to one band of noise levels (the coarse or the cleaning stage of the
//! diffusion trajectory), followed by a DP-SGD phase on private data over the
//! remaining band. Alongside the trainer it ships the supporting machinery:
//! forward diffusion processes, truncated log-normal σ sampling, stage
//! threshold selection from ᾱ/SNR curves, dead-leaves and salt-and-pepper
//! generators, an RDP accountant with noise calibration, a deterministic
//! DDIM sampler, Monte Carlo verifiers for the two convergence bounds the
//! staging relies on, and Fréchet-feature-distance / classifier-accuracy
//! evaluation.
//!
//! All numeric modules are generic over the scalar type via [`Scalar`];
//! the concrete aliases below fix the default `f64` precision used by the
//! tests and the CLI.

pub mod accountant;
pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod gradient;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod privacy;
pub mod rng;
pub mod scalar;
pub mod stages;
pub mod synthgen;
pub mod tensor;
pub mod theorems;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar precision for the shipped pipelines.
pub type Real = f64;

pub type Tensor = tensor::Tensor<Real>;
pub type GradientVector = gradient::GradientVector<Real>;
pub type DenoiserConfig = denoiser::DenoiserConfig<Real>;
pub type DenoiserParams = denoiser::DenoiserParams<Real>;
pub type AdamState = optim::AdamState<Real>;
pub type DdpmSchedule = diffusion::DdpmSchedule<Real>;
pub type SigmaDistribution = diffusion::SigmaDistribution<Real>;
pub type EdmLossConfig = diffusion::EdmLossConfig<Real>;
pub type StagePlan = stages::StagePlan<Real>;
pub type CurveTable = stages::CurveTable<Real>;
