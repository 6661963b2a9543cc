//! Sparse, positive-definite basis covariance estimation from compositional
//! data, jointly across several populations.
//!
//! The pipeline is: compositions → sample variation matrices
//! ([`compositional::variation_tensor`]) → penalized least-squares fit under
//! an eigenvalue floor ([`solver::fit`]) → tuning by cross-validation or
//! assessment by bootstrap ([`tuning`]) → evaluation against known truths
//! ([`metrics`]).

pub mod compositional;
pub mod error;
pub mod metrics;
pub mod par;
pub mod solver;
pub mod tensor;
pub mod tuning;

pub use compositional::{CompositionDataset, GroundTruthSpec, ModelId};
pub use error::{Error, Result};
pub use solver::{fit, EigenFloor, FitResult, SolverConfig};
pub use tensor::{CovarianceTensor, VariationTensor};
