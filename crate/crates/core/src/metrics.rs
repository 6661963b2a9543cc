//! Error norms, support recovery rates and the soft-thresholded sample
//! covariance baseline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::soft;
use crate::tensor::CovarianceTensor;

/// Entries with `|v| <= SUPPORT_TOL` count as zero.
pub const SUPPORT_TOL: f64 = 1e-8;

/// Label under which the baseline is reported. It uses one tuned scalar
/// threshold per population, not entry-adaptive thresholds.
pub const ORACLE_LABEL: &str = "oracle-soft";

pub fn is_nonzero(v: f64) -> bool {
    v.abs() > SUPPORT_TOL
}

/// `R_jk = Omega_jk / sqrt(Omega_jj Omega_kk)` slice by slice.
pub fn to_correlation(omega: &CovarianceTensor) -> Result<CovarianceTensor> {
    let slices = omega
        .slices()
        .iter()
        .enumerate()
        .map(|(h, s)| {
            let d = s.diagonal();
            if let Some(j) = d.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Domain(format!(
                    "slice {h} has nonpositive variance {} at {j}",
                    d[j]
                )));
            }
            let inv: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
            let p = s.nrows();
            Ok(DMatrix::from_fn(p, p, |j, k| {
                if j == k {
                    1.0
                } else {
                    s[(j, k)] * inv[j] * inv[k]
                }
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    CovarianceTensor::new(slices)
}

/// Frobenius and L1 matrix-norm errors, averaged over populations and
/// divided by `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub frob_per_p: f64,
    pub l1_per_p: f64,
}

/// L1 matrix norm: largest column absolute sum.
fn l1_matrix_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn error_norms(est: &CovarianceTensor, truth: &CovarianceTensor) -> Result<ErrorNorms> {
    est.same_shape(truth)?;
    let h = est.h_count() as f64;
    let p = est.dim() as f64;
    let (mut frob, mut l1) = (0.0, 0.0);
    for (a, b) in est.slices().iter().zip(truth.slices()) {
        let d = a - b;
        frob += d.norm();
        l1 += l1_matrix_norm(&d);
    }
    Ok(ErrorNorms {
        frob_per_p: frob / h / p,
        l1_per_p: l1 / h / p,
    })
}

/// Support recovery rates over ordered off-diagonal pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRates {
    /// Mean over populations with at least one true nonzero.
    pub tpr: f64,
    /// Mean over populations with at least one true zero.
    pub tnr: f64,
    pub per_population_tpr: Vec<Option<f64>>,
    pub per_population_tnr: Vec<Option<f64>>,
    /// Populations left out of the TPR mean (no true nonzeros).
    pub excluded_from_tpr: Vec<usize>,
    /// Populations left out of the TNR mean (no true zeros).
    pub excluded_from_tnr: Vec<usize>,
}

fn mean_of(values: &[Option<f64>]) -> f64 {
    let kept: Vec<f64> = values.iter().flatten().copied().collect();
    if kept.is_empty() {
        f64::NAN
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    }
}

pub fn tpr_tnr(est: &CovarianceTensor, truth: &CovarianceTensor) -> Result<SupportRates> {
    est.same_shape(truth)?;
    let p = est.dim();
    let mut per_tpr = Vec::with_capacity(est.h_count());
    let mut per_tnr = Vec::with_capacity(est.h_count());
    for (a, b) in est.slices().iter().zip(truth.slices()) {
        let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for j in 0..p {
            for k in 0..p {
                if j == k {
                    continue;
                }
                let e = is_nonzero(a[(j, k)]);
                if is_nonzero(b[(j, k)]) {
                    pos += 1;
                    tp += e as usize;
                } else {
                    neg += 1;
                    tn += (!e) as usize;
                }
            }
        }
        per_tpr.push((pos > 0).then(|| tp as f64 / pos as f64));
        per_tnr.push((neg > 0).then(|| tn as f64 / neg as f64));
    }
    let excluded = |v: &[Option<f64>]| {
        v.iter()
            .enumerate()
            .filter_map(|(h, r)| r.is_none().then_some(h))
            .collect()
    };
    Ok(SupportRates {
        tpr: mean_of(&per_tpr),
        tnr: mean_of(&per_tnr),
        excluded_from_tpr: excluded(&per_tpr),
        excluded_from_tnr: excluded(&per_tnr),
        per_population_tpr: per_tpr,
        per_population_tnr: per_tnr,
    })
}

/// Everything reported for one estimate against one truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub covariance: ErrorNorms,
    pub correlation: ErrorNorms,
    pub rates: SupportRates,
    /// Per-population `(covariance, correlation)` norms.
    pub per_population: Vec<(ErrorNorms, ErrorNorms)>,
}

fn one_slice(t: &CovarianceTensor, h: usize) -> CovarianceTensor {
    CovarianceTensor::new(vec![t.slice(h).clone()]).expect("square slice")
}

/// Covariance- and correlation-scale errors plus TPR/TNR.
pub fn evaluate(est: &CovarianceTensor, truth: &CovarianceTensor) -> Result<MetricsReport> {
    let est_cor = to_correlation(est)?;
    let truth_cor = to_correlation(truth)?;
    let per_population = (0..est.h_count())
        .map(|h| {
            Ok((
                error_norms(&one_slice(est, h), &one_slice(truth, h))?,
                error_norms(&one_slice(&est_cor, h), &one_slice(&truth_cor, h))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        covariance: error_norms(est, truth)?,
        correlation: error_norms(&est_cor, &truth_cor)?,
        rates: tpr_tnr(est, truth)?,
        per_population,
    })
}

/// Sample covariance (divisor `n - 1`) of the rows of `samples`.
pub fn sample_covariance(samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "sample covariance needs at least 2 rows, got {n}"
        )));
    }
    let mean = samples.row_mean();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}

/// Soft-threshold the off-diagonal entries at `t`; the diagonal is kept.
pub fn soft_threshold_offdiagonal(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |j, k| {
        if j == k {
            m[(j, k)]
        } else {
            soft(m[(j, k)], t)
        }
    })
}

/// Thresholds `0, ..., max |off-diagonal|` in `count` equal steps.
pub fn default_thresholds(s: &DMatrix<f64>, count: usize) -> Vec<f64> {
    let p = s.nrows();
    let mut top: f64 = 0.0;
    for j in 0..p {
        for k in 0..p {
            if j != k {
                top = top.max(s[(j, k)].abs());
            }
        }
    }
    let count = count.max(2);
    (0..count).map(|i| top * i as f64 / (count - 1) as f64).collect()
}

/// Per population, soft-threshold the sample covariance of the latent
/// log-abundances, with the threshold picked from `thresholds` to minimize
/// the Frobenius distance to the validation sample covariance. `None`
/// thresholds use [`default_thresholds`] with 50 steps.
pub fn oracle_baseline(
    train_log_basis: &[DMatrix<f64>],
    validation_log_basis: &[DMatrix<f64>],
    thresholds: Option<&[f64]>,
) -> Result<CovarianceTensor> {
    if train_log_basis.len() != validation_log_basis.len() {
        return Err(Error::shape(
            format!("{} validation blocks", train_log_basis.len()),
            format!("{}", validation_log_basis.len()),
        ));
    }
    let slices = train_log_basis
        .iter()
        .zip(validation_log_basis)
        .map(|(train, val)| {
            if train.ncols() != val.ncols() {
                return Err(Error::shape(
                    format!("{} columns", train.ncols()),
                    format!("{}", val.ncols()),
                ));
            }
            let s = sample_covariance(train)?;
            let sv = sample_covariance(val)?;
            let grid = match thresholds {
                Some(t) => t.to_vec(),
                None => default_thresholds(&s, 50),
            };
            let mut best: Option<(f64, DMatrix<f64>)> = None;
            for t in grid {
                let cand = soft_threshold_offdiagonal(&s, t);
                let score = (&cand - &sv).norm();
                if best.as_ref().is_none_or(|(b, _)| score < *b) {
                    best = Some((score, cand));
                }
            }
            best.map(|(_, m)| m)
                .ok_or_else(|| Error::InvalidInput("empty threshold grid".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    CovarianceTensor::new(slices)
}
