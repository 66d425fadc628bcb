//! Generative augmentation by masked mixing of original and edited images,
//! followed by interpolation with a fractal image.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the pipeline uses.

pub mod backend;
pub mod compose;
pub mod error;
pub mod filter;
pub mod fractal;
pub mod hash;
pub mod image;
pub mod manifest;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod scalar;

pub use error::{GenMixError, Result};

pub type Image = image::ImageBuf<f64>;
pub type Image32 = image::ImageBuf<f32>;
pub type Mask = mask::MaskBuf<f64>;
pub type Mask32 = mask::MaskBuf<f32>;
pub type EmbeddingVector = filter::Embedding<f64>;
pub type FractalSet = fractal::FractalSet<f64>;
pub type FilterStats = filter::FilterStats<f64>;
