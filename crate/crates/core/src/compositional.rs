//! Compositional samples, sample variation matrices, the closed-form
//! diagonal estimator and the synthetic ground-truth models.
//!
//! Index sets are written 1-based in the docs below (block `A_2` of Model 2
//! is `{p/4 + 1, ..., p/2}`), and are 0-based half-open ranges in code.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{CovarianceTensor, VariationTensor};

/// Tolerance on `|sum(row) - 1|` for a composition.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Per-population compositional samples sharing the same `p` components.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionDataset {
    populations: Vec<DMatrix<f64>>,
    population_names: Vec<String>,
    labels: Option<Vec<String>>,
}

impl CompositionDataset {
    /// Validate and wrap `n_(h) x p` blocks of compositions.
    ///
    /// Every entry must be strictly positive and every row must sum to one;
    /// zero counts have to be pseudocounted before getting here.
    pub fn new(
        populations: Vec<DMatrix<f64>>,
        population_names: Vec<String>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::InvalidInput("need at least one population".into()));
        }
        if population_names.len() != populations.len() {
            return Err(Error::InvalidInput(format!(
                "{} population names for {} populations",
                population_names.len(),
                populations.len()
            )));
        }
        let p = populations[0].ncols();
        if p == 0 {
            return Err(Error::InvalidInput("compositions need p >= 1".into()));
        }
        if let Some(l) = &labels {
            if l.len() != p {
                return Err(Error::InvalidInput(format!(
                    "{} variable labels for p = {p}",
                    l.len()
                )));
            }
        }
        for (h, block) in populations.iter().enumerate() {
            if block.ncols() != p {
                return Err(Error::InvalidInput(format!(
                    "population {h} has {} columns, expected {p}",
                    block.ncols()
                )));
            }
            if block.nrows() < 2 {
                return Err(Error::InvalidInput(format!(
                    "population {h} has {} samples, need at least 2",
                    block.nrows()
                )));
            }
            for (i, row) in block.row_iter().enumerate() {
                if let Some(j) = row.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "population {h}, row {i}, column {j}: entry {} is not strictly positive",
                        row[j]
                    )));
                }
                let s = row.sum();
                if (s - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidInput(format!(
                        "population {h}, row {i} sums to {s}, not 1"
                    )));
                }
            }
        }
        Ok(Self {
            populations,
            population_names,
            labels,
        })
    }

    /// Normalize strictly positive rows onto the simplex, then validate.
    pub fn from_positive(
        populations: Vec<DMatrix<f64>>,
        population_names: Vec<String>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let populations = populations
            .into_iter()
            .map(|mut b| {
                for mut row in b.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                b
            })
            .collect();
        Self::new(populations, population_names, labels)
    }

    pub fn h_count(&self) -> usize {
        self.populations.len()
    }

    pub fn dim(&self) -> usize {
        self.populations[0].ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.populations.iter().map(|b| b.nrows()).collect()
    }

    pub fn population(&self, h: usize) -> &DMatrix<f64> {
        &self.populations[h]
    }

    pub fn populations(&self) -> &[DMatrix<f64>] {
        &self.populations
    }

    pub fn population_names(&self) -> &[String] {
        &self.population_names
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Variable names, falling back to `V1..Vp`.
    pub fn variable_names(&self) -> Vec<String> {
        match &self.labels {
            Some(l) => l.clone(),
            None => (1..=self.dim()).map(|j| format!("V{j}")).collect(),
        }
    }

    /// New dataset made of the selected rows of every population.
    ///
    /// Rows may repeat (bootstrap resampling).
    pub fn select_rows(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.h_count() {
            return Err(Error::shape(
                format!("{} row lists", self.h_count()),
                format!("{}", rows.len()),
            ));
        }
        let populations = self
            .populations
            .iter()
            .zip(rows)
            .map(|(b, r)| b.select_rows(r.iter()))
            .collect();
        Self::new(populations, self.population_names.clone(), self.labels.clone())
    }
}

/// Sample variation matrix of the given rows of one block of compositions.
///
/// `theta_jk = (1/n) sum_i (z_ijk - mean_k z_ijk)^2` with
/// `z_ijk = log(x_ij / x_ik)`; the divisor is `n`, not `n - 1`.
/// Each entry is accumulated sequentially inside one task.
pub fn variation_matrix(block: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    let p = block.ncols();
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput("variation matrix of zero samples".into()));
    }
    let logs = block.select_rows(rows.iter()).map(f64::ln);
    let upper: Vec<Result<Vec<f64>>> = par::map_indexed(p, |j| {
        let mut out = Vec::with_capacity(p - j - 1);
        for k in (j + 1)..p {
            // shifted by the first sample; constant log-ratios give exactly 0
            let z0 = logs[(0, j)] - logs[(0, k)];
            let mut mean = 0.0;
            for i in 0..n {
                mean += logs[(i, j)] - logs[(i, k)] - z0;
            }
            mean /= n as f64;
            let mut ss = 0.0;
            for i in 0..n {
                let d = logs[(i, j)] - logs[(i, k)] - z0 - mean;
                ss += d * d;
            }
            let v = ss / n as f64;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite log-ratio variance for components ({j}, {k})"
                )));
            }
            out.push(v);
        }
        Ok(out)
    });
    let mut theta = DMatrix::zeros(p, p);
    for (j, row) in upper.into_iter().enumerate() {
        for (offset, v) in row?.into_iter().enumerate() {
            let k = j + 1 + offset;
            theta[(j, k)] = v;
            theta[(k, j)] = v;
        }
    }
    Ok(theta)
}

/// Variation tensor of selected rows of every population.
pub fn variation_tensor_of_rows(
    data: &CompositionDataset,
    rows: &[Vec<usize>],
) -> Result<VariationTensor> {
    if rows.len() != data.h_count() {
        return Err(Error::shape(
            format!("{} row lists", data.h_count()),
            format!("{}", rows.len()),
        ));
    }
    let slices: Vec<Result<DMatrix<f64>>> = par::map_indexed(data.h_count(), |h| {
        variation_matrix(data.population(h), &rows[h])
    });
    VariationTensor::new(slices.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Sample variation matrices of every population.
pub fn variation_tensor(data: &CompositionDataset) -> Result<VariationTensor> {
    let rows: Vec<Vec<usize>> = data.sizes().into_iter().map(|n| (0..n).collect()).collect();
    variation_tensor_of_rows(data, &rows)
}

/// Variances of the log-abundances when every covariance is forced to zero.
///
/// This is the least-squares fit of `theta` by `w 1^T + 1 w^T` over the
/// off-diagonal entries, available in closed form for `p >= 3`. Entries can
/// come out negative; nothing is clamped here.
pub fn closed_form_diagonal(theta: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = theta.nrows();
    if theta.ncols() != p {
        return Err(Error::shape("square matrix", format!("{}x{}", p, theta.ncols())));
    }
    if p < 3 {
        return Err(Error::Domain(format!(
            "closed-form diagonal requires p >= 3, got p = {p}"
        )));
    }
    let row_sums: Vec<f64> = (0..p)
        .map(|j| (0..p).filter(|&k| k != j).map(|k| theta[(j, k)]).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    let pm1 = (p - 1) as f64;
    let pm2 = (p - 2) as f64;
    // Dropping row j and column j removes 2 * row_sums[j] from the total.
    Ok(DVector::from_iterator(
        p,
        row_sums
            .iter()
            .map(|&r| r / pm1 - (total - 2.0 * r) / (2.0 * pm1 * pm2)),
    ))
}

/// The three synthetic covariance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    /// Banded: `0.3` (populations 1, 2) or `-0.2` (populations 3, 4) on
    /// `1 <= |j - k| <= 2`, unit diagonal.
    Model1,
    /// One AR(1) block `0.8^|j-k|` of side `p/4` per population, at a
    /// different position each time.
    Model2,
    /// `D C_(h) D` with AR(1) blocks `0.9^|j-k|` of side `p/2` and `D`
    /// equally spaced from 3 to 1.
    Model3,
}

impl ModelId {
    pub fn from_number(id: u8) -> Result<Self> {
        match id {
            1 => Ok(ModelId::Model1),
            2 => Ok(ModelId::Model2),
            3 => Ok(ModelId::Model3),
            _ => Err(Error::Domain(format!("unknown model {id}, expected 1, 2 or 3"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            ModelId::Model1 => 1,
            ModelId::Model2 => 2,
            ModelId::Model3 => 3,
        }
    }
}

/// Number of populations in every synthetic model.
pub const MODEL_POPULATIONS: usize = 4;

/// A synthetic model at a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruthSpec {
    pub model: ModelId,
    pub p: usize,
}

impl GroundTruthSpec {
    pub fn new(model: ModelId, p: usize) -> Result<Self> {
        let divisor = match model {
            ModelId::Model1 => 1,
            ModelId::Model2 => 4,
            ModelId::Model3 => 6,
        };
        if p < 3 || p % divisor != 0 {
            return Err(Error::Domain(format!(
                "model {} needs p >= 3 divisible by {divisor}, got {p}",
                model.number()
            )));
        }
        Ok(Self { model, p })
    }

    /// 0-based half-open index range of population `h`'s block
    /// (`A_h` for Model 2, `B_h` for Model 3). `None` for Model 1.
    pub fn block(&self, h: usize) -> Option<Range<usize>> {
        let p = self.p;
        match self.model {
            ModelId::Model1 => None,
            ModelId::Model2 => Some(h * p / 4..(h + 1) * p / 4),
            ModelId::Model3 => {
                let (lo, hi) = [(0, 3), (1, 4), (2, 5), (3, 6)][h];
                Some(lo * p / 6..hi * p / 6)
            }
        }
    }

    /// Diagonal of the Model 3 scale matrix `D`: equally spaced from 3 to 1.
    pub fn scales(&self) -> DVector<f64> {
        let p = self.p;
        match self.model {
            ModelId::Model3 => DVector::from_iterator(
                p,
                (0..p).map(|j| 3.0 - 2.0 * j as f64 / (p - 1) as f64),
            ),
            _ => DVector::from_element(p, 1.0),
        }
    }
}

/// Convert a 0-based half-open range to the inclusive 1-based `(first, last)`
/// used in the model descriptions.
pub fn to_one_based(r: &Range<usize>) -> (usize, usize) {
    (r.start + 1, r.end)
}

/// Ground-truth covariance tensor (H = 4) of a synthetic model.
pub fn model_truth(spec: &GroundTruthSpec) -> Result<CovarianceTensor> {
    let spec = GroundTruthSpec::new(spec.model, spec.p)?;
    let p = spec.p;
    let slices = (0..MODEL_POPULATIONS)
        .map(|h| {
            let mut m = DMatrix::zeros(p, p);
            match spec.model {
                ModelId::Model1 => {
                    let c = if h < 2 { 0.3 } else { -0.2 };
                    for j in 0..p {
                        for k in 0..p {
                            let d = j.abs_diff(k);
                            m[(j, k)] = match d {
                                0 => 1.0,
                                1 | 2 => c,
                                _ => 0.0,
                            };
                        }
                    }
                }
                ModelId::Model2 => {
                    let block = spec.block(h).expect("model 2 has blocks");
                    for j in 0..p {
                        for k in 0..p {
                            let d = j.abs_diff(k);
                            let inside = block.contains(&j) && block.contains(&k);
                            // |j - k| < p/4 always holds inside a block of side p/4.
                            if inside && 4 * d < p {
                                m[(j, k)] = 0.8f64.powi(d as i32);
                            } else if j == k {
                                m[(j, k)] = 1.0;
                            }
                        }
                    }
                }
                ModelId::Model3 => {
                    let block = spec.block(h).expect("model 3 has blocks");
                    let dscale = spec.scales();
                    for j in 0..p {
                        for k in 0..p {
                            let d = j.abs_diff(k);
                            let c = if block.contains(&j) && block.contains(&k) {
                                0.9f64.powi(d as i32)
                            } else if j == k {
                                1.0
                            } else {
                                0.0
                            };
                            // same operand order for (j, k) and (k, j) keeps the slice exactly symmetric
                            let (lo, hi) = (j.min(k), j.max(k));
                            m[(j, k)] = dscale[lo] * c * dscale[hi];
                        }
                    }
                }
            }
            m
        })
        .collect::<Vec<_>>();
    for (h, s) in slices.iter().enumerate() {
        let min = s.clone().symmetric_eigenvalues().min();
        if !(min > 0.0) {
            return Err(Error::Numeric(format!(
                "model {} slice {h} is not positive definite (min eigenvalue {min})",
                spec.model.number()
            )));
        }
    }
    CovarianceTensor::new(slices)
}

/// A simulated dataset together with the latent log-abundances it came from.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: CompositionDataset,
    /// `n_(h) x p` blocks of `log W`.
    pub log_basis: Vec<DMatrix<f64>>,
}

/// Draw `log W_(h)i ~ N(0, Omega_(h))` and close each draw to the simplex.
///
/// Sampling uses the lower Cholesky factor times standard normals from a
/// `ChaCha8Rng` seeded with `seed`, one stream per population, so the output
/// is a pure function of its arguments.
pub fn simulate_with_basis(
    truth: &CovarianceTensor,
    sizes: &[usize],
    seed: u64,
) -> Result<SimulatedData> {
    if sizes.len() != truth.h_count() {
        return Err(Error::shape(
            format!("{} sample sizes", truth.h_count()),
            format!("{}", sizes.len()),
        ));
    }
    if let Some(h) = sizes.iter().position(|&n| n < 2) {
        return Err(Error::Domain(format!(
            "population {h} needs at least 2 samples, got {}",
            sizes[h]
        )));
    }
    let p = truth.dim();
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut bases = Vec::with_capacity(sizes.len());
    for (h, &n) in sizes.iter().enumerate() {
        let chol = nalgebra::Cholesky::new(truth.slice(h).clone()).ok_or_else(|| {
            Error::Domain(format!("truth slice {h} is not positive definite"))
        })?;
        let l = chol.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(h as u64);
        let z = DMatrix::<f64>::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng));
        let logw = (l * z).transpose();
        let mut x = logw.clone();
        for mut row in x.row_iter_mut() {
            let m = row.max();
            row.apply(|v| *v = (*v - m).exp());
            let s = row.sum();
            row /= s;
        }
        blocks.push(x);
        bases.push(logw);
    }
    let names = (1..=sizes.len()).map(|h| format!("pop{h}")).collect();
    Ok(SimulatedData {
        dataset: CompositionDataset::new(blocks, names, None)?,
        log_basis: bases,
    })
}

/// Simulated compositions only; see [`simulate_with_basis`].
pub fn simulate_dataset(
    truth: &CovarianceTensor,
    sizes: &[usize],
    seed: u64,
) -> Result<CompositionDataset> {
    simulate_with_basis(truth, sizes, seed).map(|s| s.dataset)
}
