//! Entropy-constrained tensorial radiance fields: a self-contained trainer
//! and codec for VM-decomposed feature grids.
//!
//! The pipeline fits a vector-matrix factorized feature grid to an analytic
//! scene with a rate-distortion loss, where the rate term is a learned
//! entropy estimate of block-DCT coefficients. After training, the grid is
//! quantized to 8-bit integers in the coefficient domain and range-coded
//! against frequency tables frozen from the learned coefficient model.
//!
//! Module map:
//! - [`grid`]: VM-decomposed grid storage and differentiable feature lookup
//! - [`transform`]: block-wise orthonormal DCT-II forward/inverse
//! - [`entropy`]: learned per-channel coefficient model and bit estimates
//! - [`renderer`]: rays, sampling, decoding, emission-absorption integration
//! - [`scenes`]: analytic synthetic scenes and the ground-truth renderer
//! - [`trainer`]: rate-distortion loss assembly, Adam steps, gradient checks
//! - [`codec`]: quantization, range coding, bitstream serialization
//! - [`checkpoint`]: binary checkpoint I/O for trained models
//! - [`pipeline`]: run configuration and end-to-end train/compress/eval

pub mod checkpoint;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod renderer;
pub mod scenes;
pub mod tensor;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
