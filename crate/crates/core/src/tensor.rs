//! Stacks of `p x p` slices indexed by population: the `H x p x p` tensors
//! the estimator works with.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn check_slices(slices: &[DMatrix<f64>]) -> Result<usize> {
    let first = slices
        .first()
        .ok_or_else(|| Error::InvalidInput("tensor needs at least one slice".into()))?;
    let p = first.nrows();
    for (h, s) in slices.iter().enumerate() {
        if s.nrows() != p || s.ncols() != p {
            return Err(Error::shape(
                format!("{p}x{p} slices"),
                format!("slice {h} is {}x{}", s.nrows(), s.ncols()),
            ));
        }
    }
    Ok(p)
}

/// An `H x p x p` tensor of covariance-like slices.
///
/// Used for estimates, ground truths, and the gradient and correction
/// iterates of the solver. Slice `h` is `Omega_(h)`; the fiber at `(j, k)` is
/// the length-`H` vector of `(j, k)` entries across slices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTensor {
    slices: Vec<DMatrix<f64>>,
}

impl CovarianceTensor {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        check_slices(&slices)?;
        Ok(Self { slices })
    }

    pub fn zeros(h_count: usize, p: usize) -> Self {
        Self {
            slices: vec![DMatrix::zeros(p, p); h_count],
        }
    }

    /// Diagonal slices built from per-population diagonal vectors.
    pub fn from_diagonals(diagonals: &[DVector<f64>]) -> Result<Self> {
        let slices = diagonals
            .iter()
            .map(|d| DMatrix::from_diagonal(d))
            .collect::<Vec<_>>();
        Self::new(slices)
    }

    pub fn h_count(&self) -> usize {
        self.slices.len()
    }

    pub fn dim(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn slice(&self, h: usize) -> &DMatrix<f64> {
        &self.slices[h]
    }

    pub fn slice_mut(&mut self, h: usize) -> &mut DMatrix<f64> {
        &mut self.slices[h]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn slices_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.slices
    }

    pub fn into_slices(self) -> Vec<DMatrix<f64>> {
        self.slices
    }

    /// The mode-1 fiber `(Omega_(1)jk, ..., Omega_(H)jk)`.
    pub fn fiber(&self, j: usize, k: usize) -> Vec<f64> {
        self.slices.iter().map(|s| s[(j, k)]).collect()
    }

    /// Diagonal of slice `h`.
    pub fn diagonal(&self, h: usize) -> DVector<f64> {
        self.slices[h].diagonal()
    }

    pub fn same_shape(&self, other: &CovarianceTensor) -> Result<()> {
        if self.h_count() != other.h_count() || self.dim() != other.dim() {
            return Err(Error::shape(
                format!("{}x{}x{}", self.h_count(), self.dim(), self.dim()),
                format!("{}x{}x{}", other.h_count(), other.dim(), other.dim()),
            ));
        }
        Ok(())
    }

    /// Frobenius inner product over all `H * p * p` entries.
    pub fn dot(&self, other: &CovarianceTensor) -> f64 {
        self.slices
            .iter()
            .zip(&other.slices)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &CovarianceTensor) -> CovarianceTensor {
        CovarianceTensor {
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &CovarianceTensor) {
        for (a, b) in self.slices.iter_mut().zip(&other.slices) {
            a.zip_apply(b, |x, y| *x += scale * y);
        }
    }

    /// Largest `|a - a^T|` over all slices.
    pub fn max_asymmetry(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| (s - s.transpose()).amax())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Smallest eigenvalue of every slice.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.slices
            .iter()
            .map(|s| {
                let sym = (s + s.transpose()) * 0.5;
                sym.symmetric_eigenvalues().min()
            })
            .collect()
    }

    /// Slices symmetric and every smallest eigenvalue at least `epsilon - 1e-8`.
    pub fn is_feasible(&self, epsilon: f64) -> bool {
        self.max_asymmetry() == 0.0
            && self
                .min_eigenvalues()
                .iter()
                .all(|&m| m >= epsilon - 1e-8)
    }
}

/// Stacked sample variation matrices.
///
/// Every slice is exactly symmetric with an exactly zero diagonal and
/// nonnegative entries; the constructor enforces this.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationTensor {
    slices: Vec<DMatrix<f64>>,
}

impl VariationTensor {
    pub fn new(slices: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = check_slices(&slices)?;
        for (h, s) in slices.iter().enumerate() {
            for j in 0..p {
                if s[(j, j)] != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "variation slice {h} has nonzero diagonal at {j}"
                    )));
                }
                for k in 0..j {
                    let v = s[(j, k)];
                    if v != s[(k, j)] {
                        return Err(Error::InvalidInput(format!(
                            "variation slice {h} is not symmetric at ({j}, {k})"
                        )));
                    }
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "variation slice {h} has invalid entry {v} at ({j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(Self { slices })
    }

    /// `theta = omega 1^T + 1 omega^T - 2 Omega` for every slice.
    ///
    /// Fails if the result has a negative entry, which happens only when a
    /// slice of `omega` is far from positive semidefinite.
    pub fn from_covariance(omega: &CovarianceTensor) -> Result<Self> {
        let p = omega.dim();
        let slices = omega
            .slices()
            .iter()
            .map(|s| {
                let mut t = DMatrix::zeros(p, p);
                for j in 0..p {
                    for k in (j + 1)..p {
                        let v = s[(j, j)] + s[(k, k)] - 2.0 * s[(j, k)];
                        t[(j, k)] = v;
                        t[(k, j)] = v;
                    }
                }
                t
            })
            .collect();
        Self::new(slices)
    }

    pub fn h_count(&self) -> usize {
        self.slices.len()
    }

    pub fn dim(&self) -> usize {
        self.slices[0].nrows()
    }

    pub fn slice(&self, h: usize) -> &DMatrix<f64> {
        &self.slices[h]
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn check_matches(&self, omega: &CovarianceTensor) -> Result<()> {
        if self.h_count() != omega.h_count() || self.dim() != omega.dim() {
            return Err(Error::shape(
                format!("{}x{}x{}", self.h_count(), self.dim(), self.dim()),
                format!("{}x{}x{}", omega.h_count(), omega.dim(), omega.dim()),
            ));
        }
        Ok(())
    }
}
