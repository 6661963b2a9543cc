use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the eigenvalues of every estimated slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenFloor {
    /// Project every slice onto `{M = M^T, M >= eps I}`.
    Floor(f64),
    /// Skip the projection (only symmetrize). Solves the plain L1 problem.
    Unconstrained,
}

impl EigenFloor {
    pub fn value(self) -> Option<f64> {
        match self {
            EigenFloor::Floor(e) => Some(e),
            EigenFloor::Unconstrained => None,
        }
    }
}

impl Default for EigenFloor {
    fn default() -> Self {
        EigenFloor::Floor(DEFAULT_EPSILON)
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_MAX_BACKTRACKS: usize = 60;

/// Penalties, eigenvalue floor and step-size controls for [`fit`](super::fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Elementwise L1 weight on off-diagonal entries.
    pub lambda: f64,
    /// Group weight on each off-diagonal fiber.
    pub gamma: f64,
    /// Per-population replacement for `lambda`.
    pub per_population_lambda: Option<Vec<f64>>,
    pub epsilon: EigenFloor,
    /// Initial step; `None` means `1 / (8 p)`.
    pub alpha0: Option<f64>,
    /// Backtracking shrink factor in `(0, 1)`.
    pub tau: f64,
    /// Relative change of the penalized objective that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Step shrinks allowed within one iteration.
    pub max_backtracks: usize,
    /// Keep the `(loss, Q)` pair of every accepted step in the result.
    pub record_steps: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            gamma: 0.0,
            per_population_lambda: None,
            epsilon: EigenFloor::default(),
            alpha0: None,
            tau: DEFAULT_TAU,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            max_backtracks: DEFAULT_MAX_BACKTRACKS,
            record_steps: false,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self {
            lambda,
            gamma,
            ..Self::default()
        }
    }

    pub fn with_epsilon(mut self, epsilon: EigenFloor) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_per_population_lambda(mut self, lambdas: Vec<f64>) -> Self {
        self.per_population_lambda = Some(lambdas);
        self
    }

    pub fn recording_steps(mut self) -> Self {
        self.record_steps = true;
        self
    }

    /// The L1 weight applied to population `h`.
    pub fn lambda_for(&self, h: usize) -> f64 {
        match &self.per_population_lambda {
            Some(l) => l[h],
            None => self.lambda,
        }
    }

    /// L1 weights for all `h_count` populations.
    pub fn lambdas(&self, h_count: usize) -> Vec<f64> {
        (0..h_count).map(|h| self.lambda_for(h)).collect()
    }

    pub fn initial_step(&self, p: usize) -> f64 {
        self.alpha0.unwrap_or(1.0 / (8.0 * p as f64))
    }

    pub fn validate(&self, h_count: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("solver config: {what}")));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be finite and >= 0");
        }
        if let Some(l) = &self.per_population_lambda {
            if l.len() != h_count {
                return bad(&format!(
                    "per-population lambda has {} entries for {h_count} populations",
                    l.len()
                ));
            }
            if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return bad("per-population lambda entries must be finite and >= 0");
            }
        }
        if let EigenFloor::Floor(e) = self.epsilon {
            if !e.is_finite() {
                return bad("epsilon must be finite (use Unconstrained to drop the floor)");
            }
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0) || !a.is_finite() {
                return bad("alpha0 must be finite and > 0");
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks must be >= 1");
        }
        Ok(())
    }
}
