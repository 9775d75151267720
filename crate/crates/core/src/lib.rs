//! Extreme activation compression for memory-efficient GNN training.
//!
//! Activations saved for the backward pass are randomly projected, then
//! quantised to 2/4/8-bit codes with stochastic rounding, either per row or
//! per block of `G` values. For INT2 the inner bin edges can be tuned to
//! minimise the expected rounding variance under a clipped-normal model of
//! the normalised activations.

pub mod blockwise;
pub mod data;
pub mod dist;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod histogram;
pub mod projection;
pub mod quadrature;
pub mod quant;
pub mod rng;
pub mod tensor;
pub mod varopt;

pub use error::{Error, Result};
pub use graph::SparseAdjacency;
pub use histogram::Histogram;
pub use rng::SeededRng;
pub use tensor::DenseMatrix;
