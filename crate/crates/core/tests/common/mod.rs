#![allow(dead_code)]

use mcc_core::{CovarianceTensor, VariationTensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_symmetric(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = normal_matrix(p, p, rng);
    (&a + a.transpose()) * 0.5
}

/// `B B^T / p + ridge I`, positive definite with min eigenvalue >= ridge.
pub fn random_spd(p: usize, ridge: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = normal_matrix(p, p, rng);
    &b * b.transpose() / p as f64 + DMatrix::identity(p, p) * ridge
}

pub fn random_tensor(h: usize, p: usize, ridge: f64, rng: &mut ChaCha8Rng) -> CovarianceTensor {
    CovarianceTensor::new((0..h).map(|_| random_spd(p, ridge, rng)).collect()).unwrap()
}

pub fn theta_of(omega: &CovarianceTensor) -> VariationTensor {
    VariationTensor::from_covariance(omega).unwrap()
}

/// Circulant slice with `c` at offsets 1, `-c` at offsets 2 and `sigma` on
/// the diagonal. Off-diagonal rows sum to zero, which makes the diagonal
/// identified by the variation matrix alone.
pub fn balanced_ring(p: usize, c: f64, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| {
        let d = (j + p - k) % p;
        match d.min(p - d) {
            0 => sigma,
            1 => c,
            2 => -c,
            _ => 0.0,
        }
    })
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
