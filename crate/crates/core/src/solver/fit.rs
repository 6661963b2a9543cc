use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{EigenFloor, SolverConfig};
use super::ops::{loss, loss_and_grad, penalty, project_psd_floor, prox_sparse_group, surrogate_q};
use crate::compositional::closed_form_diagonal;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{CovarianceTensor, VariationTensor};

/// The three iterate blocks of the splitting plus the current step size.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Output of the sparse-group prox.
    pub omega: CovarianceTensor,
    /// Output of the eigenvalue-floor projection; always feasible.
    pub omega_tilde: CovarianceTensor,
    /// Running correction tensor linking the two proxes.
    pub psi: CovarianceTensor,
    pub alpha: f64,
    pub iter: usize,
}

/// One accepted step of the backtracking search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub alpha: f64,
    /// Loss at the accepted prox output.
    pub loss: f64,
    /// Quadratic model value at the same point.
    pub surrogate: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Feasible iterate at termination.
    pub estimate: CovarianceTensor,
    /// Sparse-group prox output of the last iteration. Its zero pattern is
    /// the estimated support; it agrees with `estimate` up to the
    /// convergence tolerance.
    pub sparse_iterate: CovarianceTensor,
    /// Penalized objective at the feasible iterate: entry 0 is the starting
    /// point, entry `t` is after iteration `t`.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_alpha: f64,
    /// Total number of step shrinks.
    pub backtrack_count: usize,
    /// Filled only when `record_steps` is set.
    pub steps: Vec<StepRecord>,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the start value")
    }
}

/// Diagonal starting point: closed-form variances floored at epsilon.
///
/// For `p = 2` the single variation is split evenly between the two
/// variances.
pub fn initial_estimate(theta: &VariationTensor, epsilon: EigenFloor) -> Result<CovarianceTensor> {
    let p = theta.dim();
    if p < 2 {
        return Err(Error::Domain(format!("need p >= 2 components, got {p}")));
    }
    let floor = epsilon.value().unwrap_or(f64::NEG_INFINITY);
    let diagonals = theta
        .slices()
        .iter()
        .map(|t| {
            let d = if p == 2 {
                DVector::from_element(2, t[(0, 1)] / 2.0)
            } else {
                closed_form_diagonal(t)?
            };
            Ok(d.map(|v| v.max(floor)))
        })
        .collect::<Result<Vec<_>>>()?;
    CovarianceTensor::from_diagonals(&diagonals)
}

fn objective(omega: &CovarianceTensor, theta: &VariationTensor, lambdas: &[f64], gamma: f64) -> Result<f64> {
    let f = loss(omega, theta)? + penalty(omega, lambdas, gamma)?;
    if !f.is_finite() {
        return Err(Error::Numeric(format!("objective became {f}")));
    }
    Ok(f)
}

fn project_all(point: &CovarianceTensor, epsilon: EigenFloor) -> Result<CovarianceTensor> {
    let slices = par::map_indexed(point.h_count(), |h| project_psd_floor(point.slice(h), epsilon));
    CovarianceTensor::new(slices.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Minimize the penalized variation-matrix loss subject to the eigenvalue
/// floor by adaptive proximal-proximal gradient descent.
///
/// Each iteration takes a gradient step from the feasible iterate, applies
/// the sparse-group prox, shrinks the step until the loss sits under its
/// quadratic model, projects onto the eigenvalue floor and updates the
/// correction tensor. The step never grows. Iteration stops once the
/// relative change of the penalized objective at the feasible iterate drops
/// below `tol`, or after `max_iter` iterations (with `converged = false`).
pub fn fit(
    theta: &VariationTensor,
    cfg: &SolverConfig,
    init: Option<&CovarianceTensor>,
) -> Result<FitResult> {
    let h_count = theta.h_count();
    let p = theta.dim();
    cfg.validate(h_count)?;
    let omega_tilde = match init {
        Some(i) => {
            theta.check_matches(i)?;
            project_all(i, cfg.epsilon)?
        }
        None => initial_estimate(theta, cfg.epsilon)?,
    };
    let lambdas = cfg.lambdas(h_count);
    let mut state = SolverState {
        omega: omega_tilde.clone(),
        psi: CovarianceTensor::zeros(h_count, p),
        omega_tilde,
        alpha: cfg.initial_step(p),
        iter: 0,
    };
    let mut trace = vec![objective(&state.omega_tilde, theta, &lambdas, cfg.gamma)?];
    let mut steps = Vec::new();
    let mut backtrack_count = 0;
    let mut converged = false;

    while state.iter < cfg.max_iter {
        let (base_loss, grad) = loss_and_grad(&state.omega_tilde, theta)?;
        let mut shrinks = 0;
        let (omega_next, accepted_loss, q) = loop {
            let alpha = state.alpha;
            let mut point = state.omega_tilde.clone();
            point.axpy(-alpha, &state.psi);
            point.axpy(-alpha, &grad);
            let thresholds: Vec<f64> = lambdas.iter().map(|l| alpha * l).collect();
            let candidate = prox_sparse_group(&point, &thresholds, alpha * cfg.gamma)?;
            let cand_loss = loss(&candidate, theta)?;
            let q = surrogate_q(&candidate, &state.omega_tilde, &grad, base_loss, alpha)?;
            if !cand_loss.is_finite() || !q.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {cand_loss} or model {q} at iteration {}",
                    state.iter
                )));
            }
            if cand_loss <= q {
                break (candidate, cand_loss, q);
            }
            shrinks += 1;
            backtrack_count += 1;
            if shrinks > cfg.max_backtracks {
                return Err(Error::Numeric(format!(
                    "backtracking exhausted {} shrinks at iteration {} (alpha = {alpha:e})",
                    cfg.max_backtracks, state.iter
                )));
            }
            state.alpha *= cfg.tau;
        };
        let alpha = state.alpha;
        if cfg.record_steps {
            steps.push(StepRecord {
                iteration: state.iter,
                alpha,
                loss: accepted_loss,
                surrogate: q,
            });
        }

        let mut shifted = omega_next.clone();
        shifted.axpy(alpha, &state.psi);
        let tilde_next = project_all(&shifted, cfg.epsilon)?;
        state.psi.axpy(1.0 / alpha, &omega_next.sub(&tilde_next));
        state.omega = omega_next;
        state.omega_tilde = tilde_next;
        state.iter += 1;

        let f = objective(&state.omega_tilde, theta, &lambdas, cfg.gamma)?;
        let prev = *trace.last().expect("nonempty");
        trace.push(f);
        if (f - prev).abs() / prev.abs().max(1.0) < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        estimate: state.omega_tilde,
        sparse_iterate: state.omega,
        objective_trace: trace,
        converged,
        iterations: state.iter,
        final_alpha: state.alpha,
        backtrack_count,
        steps,
    })
}
