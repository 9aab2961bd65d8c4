//! Parametric stochastic-neighbor embeddings.
//!
//! Learns explicit maps from high-dimensional data to the plane, either a
//! deep feedforward network or a shallow high-order network, by minimizing
//! KL objectives over point pairs or over data-exemplar pairs.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for common use.

pub mod affinity;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exemplars;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod output;
pub mod plot;
pub mod rng;
pub mod scalar;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use rng::Rng;
pub use scalar::Real;

pub type Matrix = DenseMatrix<f64>;
pub type Matrix32 = DenseMatrix<f32>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type Model = model::EmbeddingModel<f64>;
pub type Model32 = model::EmbeddingModel<f32>;
pub type Embedding = output::EmbeddingResult<f64>;
pub type Embedding32 = output::EmbeddingResult<f32>;
