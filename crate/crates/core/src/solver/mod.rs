//! Penalized estimation of the covariance tensor.

mod config;
mod fit;
mod ops;

pub use config::{
    EigenFloor, SolverConfig, DEFAULT_EPSILON, DEFAULT_MAX_BACKTRACKS, DEFAULT_MAX_ITER,
    DEFAULT_TAU, DEFAULT_TOL,
};
pub use fit::{fit, initial_estimate, FitResult, SolverState, StepRecord};
pub use ops::{
    grad_loss, loss, loss_and_grad, penalty, project_psd_floor, prox_fiber, prox_sparse_group,
    soft, surrogate_q,
};
