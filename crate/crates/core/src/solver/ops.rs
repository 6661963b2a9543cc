//! The smooth loss, the penalty, and the two proximal maps.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use super::config::EigenFloor;
use crate::error::{Error, Result};
use crate::tensor::{CovarianceTensor, VariationTensor};

/// Off-diagonal residuals `theta_jk - omega_jj - omega_kk + 2 omega_jk`
/// of one slice (zero diagonal).
fn residual(omega: &DMatrix<f64>, theta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = omega.nrows();
    DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            0.0
        } else {
            theta[(j, k)] - omega[(j, j)] - omega[(k, k)] + 2.0 * omega[(j, k)]
        }
    })
}

/// `sum_h || theta_h - w_h 1^T - 1 w_h^T + 2 Omega_h ||_F^2` with `w_h = diag(Omega_h)`.
pub fn loss(omega: &CovarianceTensor, theta: &VariationTensor) -> Result<f64> {
    theta.check_matches(omega)?;
    Ok(omega
        .slices()
        .iter()
        .zip(theta.slices())
        .map(|(o, t)| residual(o, t).norm_squared())
        .sum())
}

/// Gradient of [`loss`] at a slice-symmetric `omega`.
///
/// Off-diagonal entries are `4 r_jk`, diagonal entries `-4 sum_{l != j} r_jl`
/// where `r` is the residual above.
pub fn grad_loss(omega: &CovarianceTensor, theta: &VariationTensor) -> Result<CovarianceTensor> {
    loss_and_grad(omega, theta).map(|(_, g)| g)
}

/// [`loss`] and [`grad_loss`] sharing one residual pass.
pub fn loss_and_grad(
    omega: &CovarianceTensor,
    theta: &VariationTensor,
) -> Result<(f64, CovarianceTensor)> {
    theta.check_matches(omega)?;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(omega.h_count());
    for (o, t) in omega.slices().iter().zip(theta.slices()) {
        let r = residual(o, t);
        value += r.norm_squared();
        let mut g = r * 4.0;
        for j in 0..g.nrows() {
            let s: f64 = g.row(j).sum();
            g[(j, j)] = -s;
        }
        grads.push(g);
    }
    Ok((value, CovarianceTensor::new(grads)?))
}

/// `sum_h lambda_h ||Omega_h^-||_1 + gamma sum_{j != k} ||Omega_.jk||_2`.
///
/// Both sums run over ordered pairs, so each unordered pair counts twice.
/// Diagonals are never penalized.
pub fn penalty(omega: &CovarianceTensor, lambdas: &[f64], gamma: f64) -> Result<f64> {
    if lambdas.len() != omega.h_count() {
        return Err(Error::shape(
            format!("{} lambdas", omega.h_count()),
            format!("{}", lambdas.len()),
        ));
    }
    let p = omega.dim();
    let mut l1 = 0.0;
    for (s, &lam) in omega.slices().iter().zip(lambdas) {
        if lam == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for j in 0..p {
            for k in 0..p {
                if j != k {
                    acc += s[(j, k)].abs();
                }
            }
        }
        l1 += lam * acc;
    }
    let mut group = 0.0;
    if gamma != 0.0 {
        for j in 0..p {
            for k in 0..p {
                if j != k {
                    group += omega
                        .slices()
                        .iter()
                        .map(|s| s[(j, k)] * s[(j, k)])
                        .sum::<f64>()
                        .sqrt();
                }
            }
        }
    }
    Ok(l1 + gamma * group)
}

/// Soft-thresholding `sign(y) max(|y| - t, 0)`.
pub fn soft(y: f64, t: f64) -> f64 {
    if y > t {
        y - t
    } else if y < -t {
        y + t
    } else {
        0.0
    }
}

/// Sparse-group prox of one fiber: soft-threshold each coordinate at
/// `thresholds[h]`, then shrink the whole vector by `(1 - group / ||w||)_+`.
pub fn prox_fiber(fiber: &mut [f64], thresholds: &[f64], group: f64) {
    let mut norm2 = 0.0;
    for (v, &t) in fiber.iter_mut().zip(thresholds) {
        *v = soft(*v, t);
        norm2 += *v * *v;
    }
    let norm = norm2.sqrt();
    let scale = if norm > group { 1.0 - group / norm } else { 0.0 };
    if scale != 1.0 {
        fiber.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Prox of `a_lambda ||.^-||_1 + a_gamma sum_{j != k} ||._jk||_2` at `point`.
///
/// Diagonal fibers pass through untouched; every off-diagonal fiber goes
/// through [`prox_fiber`]. `a_lambda[h]` is the threshold for population `h`.
pub fn prox_sparse_group(
    point: &CovarianceTensor,
    a_lambda: &[f64],
    a_gamma: f64,
) -> Result<CovarianceTensor> {
    let h_count = point.h_count();
    if a_lambda.len() != h_count {
        return Err(Error::shape(
            format!("{h_count} thresholds"),
            format!("{}", a_lambda.len()),
        ));
    }
    let p = point.dim();
    let mut out = point.clone();
    let mut fiber = vec![0.0; h_count];
    for j in 0..p {
        for k in 0..p {
            if j == k {
                continue;
            }
            for (h, f) in fiber.iter_mut().enumerate() {
                *f = point.slice(h)[(j, k)];
            }
            prox_fiber(&mut fiber, a_lambda, a_gamma);
            for (h, f) in fiber.iter().enumerate() {
                out.slice_mut(h)[(j, k)] = *f;
            }
        }
    }
    Ok(out)
}

/// Iteration cap handed to the symmetric eigensolver.
const EIGEN_MAX_ITER: usize = 100_000;

/// Frobenius-nearest symmetric matrix with every eigenvalue `>= epsilon`.
///
/// The input is symmetrized as `(a + a^T) / 2` first. A matrix that already
/// satisfies the floor (checked by a Cholesky factorization of
/// `sym - epsilon I`) is returned as is; otherwise eigenvalues below the
/// floor are raised to it. With [`EigenFloor::Unconstrained`] only the
/// symmetrization is applied.
pub fn project_psd_floor(a: &DMatrix<f64>, epsilon: EigenFloor) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::shape("square matrix", format!("{}x{}", p, a.ncols())));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("projection input has non-finite entries".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eps = match epsilon {
        EigenFloor::Unconstrained => return Ok(sym),
        EigenFloor::Floor(e) => e,
    };
    let mut shifted = sym.clone();
    for j in 0..p {
        shifted[(j, j)] -= eps;
    }
    if Cholesky::new(shifted).is_some() {
        return Ok(sym);
    }
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::Numeric(format!(
            "symmetric eigensolver did not converge within {EIGEN_MAX_ITER} sweeps \
             (p = {p}, max |entry| = {})",
            a.amax()
        ))
    })?;
    let clamped = eig.eigenvalues.map(|v| v.max(eps));
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (mut col, &v) in scaled.column_iter_mut().zip(clamped.iter()) {
        col *= v;
    }
    let recon = scaled * u.transpose();
    Ok((&recon + recon.transpose()) * 0.5)
}

/// Quadratic upper model used by the backtracking test:
/// `loss(base) + <grad, c - base> + ||c - base||^2 / (2 alpha)`.
pub fn surrogate_q(
    candidate: &CovarianceTensor,
    base: &CovarianceTensor,
    grad_at_base: &CovarianceTensor,
    loss_at_base: f64,
    alpha: f64,
) -> Result<f64> {
    candidate.same_shape(base)?;
    candidate.same_shape(grad_at_base)?;
    let diff = candidate.sub(base);
    Ok(loss_at_base + grad_at_base.dot(&diff) + diff.norm_squared() / (2.0 * alpha))
}
