//! Sequential joint inference of the latent state and fixed parameters of
//! dynamic latent Gaussian state-space models.
//!
//! The posterior `p(x_t, phi | y_{1:t})` is tracked as a Gaussian mixture in
//! precision form. Each step marginalises the previous mixture through the
//! linear state equation in closed form, re-approximates the new filtering
//! density by iterated Laplace approximation, and optionally corrects the
//! result by importance sampling (EM refit or single-Gaussian moment match).
//! A population layer runs several filters in parallel and resamples them by
//! predictive score, with optional variance tempering.
//!
//! Module map:
//! - [`gaussmix`]: Gaussian / Gaussian-mixture algebra in precision form.
//! - [`iterlap`]: iterated Laplace mixture construction for arbitrary targets.
//! - [`models`]: state-space model contract, example models, exact oracles.
//! - [`seqfilter`]: the sequential core (SIBS, SIEM, SIG).
//! - [`population`]: score-based run resampling and prior tempering.

pub mod error;
pub mod gaussmix;
pub mod iterlap;
pub mod linalg;
pub mod models;
pub mod population;
pub mod seqfilter;

pub use error::{Error, Result};
