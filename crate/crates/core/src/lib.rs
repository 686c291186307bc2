//! Potential landscapes of origin-destination flows and their principal components.
//!
//! Each hourly OD matrix is reduced to a scalar potential on the region grid
//! by a weighted least-squares fit of potential differences to net flows
//! (the gradient part of a combinatorial Hodge decomposition). The stacked
//! potentials are then decomposed with covariance PCA into spatial
//! eigenvector maps and hourly score trajectories.
//!
//! The numerical core ([`hodge`], [`pca`], [`linalg`]) is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix the common choices.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod grid;
pub mod hodge;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod weighting;

pub use error::{Error, Result};
pub use grid::{DistanceMatrix, ODSnapshot, SliceLabel, SpatialGrid};
pub use scalar::Scalar;

pub type EdgeFlow = hodge::EdgeFlow<f64>;
pub type EdgeSystem = hodge::EdgeSystem<f64>;
pub type PotentialField = hodge::PotentialField<f64>;
pub type SolverConfig = hodge::SolverConfig<f64>;
pub type ObservationMatrix = pca::ObservationMatrix<f64>;
pub type PcaModel = pca::PcaModel<f64>;
pub type Matrix = linalg::Matrix<f64>;

pub type EdgeFlow32 = hodge::EdgeFlow<f32>;
pub type EdgeSystem32 = hodge::EdgeSystem<f32>;
pub type PotentialField32 = hodge::PotentialField<f32>;
pub type SolverConfig32 = hodge::SolverConfig<f32>;
pub type ObservationMatrix32 = pca::ObservationMatrix<f32>;
pub type PcaModel32 = pca::PcaModel<f32>;
pub type Matrix32 = linalg::Matrix<f32>;
