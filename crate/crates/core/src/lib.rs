//! Generative and discriminative classifiers on synthetic distribution-shift data.
//!
//! The crate covers three classifier families that share a Gaussian (or token)
//! toy data model with a planted spurious feature:
//!
//! - [`linear_models`]: LDA against max-margin logistic regression and a hard-margin SVM.
//! - [`ar_textgen`]: class-conditional bigram token models against a pooled discriminative head.
//! - [`diffusion_core`]: diffusion-classifier inference with an exact Gaussian denoiser.
//!
//! [`sweep`] runs the parallel experiments on top of these, and [`metrics`]
//! turns predictions into group-aware reports.

pub mod ar_textgen;
pub mod diffusion_core;
pub mod error;
pub mod linalg;
pub mod linear_models;
pub mod metrics;
pub mod seeds;
pub mod stats;
pub mod sweep;
pub mod synth_data;

pub use error::{Error, Result};
