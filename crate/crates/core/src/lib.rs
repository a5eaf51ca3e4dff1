//! Adversarial retinal vessel segmentation.
//!
//! A small reverse-mode differentiation engine drives a U-Net style
//! generator and a family of discriminators (pixel, patch, image level).
//! The crate also carries the training loop, dataset handling and the
//! evaluation pipeline (ROC/PR AUC, Otsu thresholding, dice, overlays).
//!
//! Numerical code is generic over [`Scalar`]; training uses `f32`.

pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod objective;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = autograd::Tensor<f32>;
pub type Tensor64 = autograd::Tensor<f64>;
