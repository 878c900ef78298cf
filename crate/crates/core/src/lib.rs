//! Wavelet-domain chaotic enhancement and CNN classification of grayscale images.
//!
//! The crate is organised as a small pipeline:
//!
//! * [`wavelet`]: separable multi-level CDF 9/7 analysis and synthesis.
//! * [`chaos`]: fixed-step RK4 integration of the n-scroll Chua system.
//! * [`modulate`]: additive chaotic perturbation of detail subbands.
//! * [`imageio`]: PGM I/O, resizing, normalization and augmentation.
//! * [`nn`]: tensors, layers, backpropagation and SGD with momentum.
//! * [`eval`]: metrics, ROC/AUC, fold plans, cross-validation, ablation and paired tests.
//! * [`pipeline`]: configuration and stage drivers shared by the command-line tool.

pub mod chaos;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod matrix;
pub mod modulate;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub use matrix::Matrix;
