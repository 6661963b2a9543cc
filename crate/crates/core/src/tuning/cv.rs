use serde::{Deserialize, Serialize};

use super::folds::{make_folds, split_rows};
use crate::compositional::{variation_tensor_of_rows, CompositionDataset};
use crate::error::{Error, Result};
use crate::par;
use crate::solver::{fit, grad_loss, initial_estimate, loss, EigenFloor, FitResult, SolverConfig};
use crate::tensor::{CovarianceTensor, VariationTensor};

/// Candidate penalties and fold settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    /// Non-increasing, strictly positive unless `allow_zero_lambda`.
    pub lambdas: Vec<f64>,
    /// Non-increasing, nonnegative.
    pub gammas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Admit `lambda = 0` (the pure group-penalty variant).
    pub allow_zero_lambda: bool,
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] >= w[1])
}

/// `count` values from `top` down to `top * ratio`, evenly spaced in log scale.
pub fn log_spaced(top: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    (0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Largest off-diagonal gradient entry and fiber norm at the diagonal
/// starting point. A lambda (or gamma) at that level leaves every
/// off-diagonal entry at zero on the first step.
pub fn penalty_scales(theta: &VariationTensor, epsilon: EigenFloor) -> Result<(f64, f64)> {
    let g = grad_loss(&initial_estimate(theta, epsilon)?, theta)?;
    let p = g.dim();
    let (mut lam, mut gam) = (0.0f64, 0.0f64);
    for j in 0..p {
        for k in 0..p {
            if j == k {
                continue;
            }
            let fiber = g.fiber(j, k);
            let norm = fiber.iter().map(|v| v * v).sum::<f64>().sqrt();
            gam = gam.max(norm);
            lam = fiber.iter().fold(lam, |m, v| m.max(v.abs()));
        }
    }
    Ok((lam, gam))
}

impl TuningGrid {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>, folds: usize, seed: u64) -> Result<Self> {
        let grid = Self {
            lambdas,
            gammas,
            folds,
            seed,
            allow_zero_lambda: false,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Ten log-spaced lambdas over `[1e-3, 1] * lambda_max`, and gammas
    /// `0` plus five log-spaced values over `[1e-3, 1] * gamma_max`, where the
    /// maxima come from [`penalty_scales`].
    pub fn default_for(
        theta: &VariationTensor,
        epsilon: EigenFloor,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        let (lmax, gmax) = penalty_scales(theta, epsilon)?;
        let lmax = if lmax > 0.0 { lmax } else { 1.0 };
        let mut gammas = if gmax > 0.0 && theta.h_count() > 1 {
            log_spaced(gmax, 1e-3, 5)
        } else {
            vec![]
        };
        gammas.push(0.0);
        Self::new(log_spaced(lmax, 1e-3, 10), gammas, folds, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.gammas.is_empty() {
            return Err(Error::Domain("tuning grid must be nonempty".into()));
        }
        if !non_increasing(&self.lambdas) || !non_increasing(&self.gammas) {
            return Err(Error::Domain("grid values must be in descending order".into()));
        }
        let lam_ok = |l: &f64| l.is_finite() && (*l > 0.0 || (self.allow_zero_lambda && *l == 0.0));
        if !self.lambdas.iter().all(lam_ok) {
            return Err(Error::Domain(
                "lambdas must be positive (set allow_zero_lambda for the group-only variant)".into(),
            ));
        }
        if !self.gammas.iter().all(|g| g.is_finite() && *g >= 0.0) {
            return Err(Error::Domain("gammas must be nonnegative".into()));
        }
        if self.folds < 2 {
            return Err(Error::Domain(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Held-out score of one grid cell in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostic {
    pub lambda_index: usize,
    pub gamma_index: usize,
    pub fold: usize,
    pub score: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `scores[i][j]`: summed held-out criterion at `(lambdas[i], gammas[j])`.
    pub scores: Vec<Vec<f64>>,
    pub selected_lambda: f64,
    pub selected_gamma: f64,
    pub selected_index: (usize, usize),
    pub per_fold: Vec<FoldDiagnostic>,
}

impl CvReport {
    pub fn all_converged(&self) -> bool {
        self.per_fold.iter().all(|d| d.converged)
    }
}

/// Lowest score; ties go to larger gamma, then larger lambda.
fn select(lambdas: &[f64], gammas: &[f64], scores: &[Vec<f64>]) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..lambdas.len() {
        for j in 0..gammas.len() {
            let (bi, bj) = best;
            let (s, b) = (scores[i][j], scores[bi][bj]);
            let better = s < b
                || (s == b
                    && (gammas[j] > gammas[bj] || (gammas[j] == gammas[bj] && lambdas[i] > lambdas[bi])));
            if better {
                best = (i, j);
            }
        }
    }
    best
}

struct CellFit {
    score: f64,
    fit: FitResult,
}

/// Fit every `(lambda, gamma)` cell on each training tensor and score it
/// against the paired held-out tensor. Results are ordered
/// `[lambda][gamma][pair]`.
fn score_cells(
    pairs: &[(VariationTensor, VariationTensor)],
    lambdas: &[f64],
    gammas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<CellFit>> {
    let (nl, ng, np) = (lambdas.len(), gammas.len(), pairs.len());
    let results = par::map_indexed(nl * ng * np, |idx| {
        let (i, rest) = (idx / (ng * np), idx % (ng * np));
        let (j, v) = (rest / np, rest % np);
        let cell_cfg = SolverConfig {
            lambda: lambdas[i],
            gamma: gammas[j],
            per_population_lambda: None,
            ..cfg.clone()
        };
        let (train, test) = &pairs[v];
        let annotate = |e: Error| {
            e.context(format!(
                "lambda = {}, gamma = {}, fold {v}",
                lambdas[i], gammas[j]
            ))
        };
        let fit = fit(train, &cell_cfg, None).map_err(annotate)?;
        let score = loss(&fit.estimate, test).map_err(annotate)?;
        if !score.is_finite() {
            return Err(annotate(Error::Numeric(format!("held-out score {score}"))));
        }
        Ok(CellFit { score, fit })
    });
    results.into_iter().collect()
}

fn assemble(
    lambdas: &[f64],
    gammas: &[f64],
    n_pairs: usize,
    cells: &[CellFit],
) -> CvReport {
    let ng = gammas.len();
    let mut scores = vec![vec![0.0; ng]; lambdas.len()];
    let mut per_fold = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.iter().enumerate() {
        let (i, rest) = (idx / (ng * n_pairs), idx % (ng * n_pairs));
        let (j, v) = (rest / n_pairs, rest % n_pairs);
        scores[i][j] += cell.score;
        per_fold.push(FoldDiagnostic {
            lambda_index: i,
            gamma_index: j,
            fold: v,
            score: cell.score,
            iterations: cell.fit.iterations,
            converged: cell.fit.converged,
        });
    }
    let (si, sj) = select(lambdas, gammas, &scores);
    CvReport {
        lambdas: lambdas.to_vec(),
        gammas: gammas.to_vec(),
        scores,
        selected_lambda: lambdas[si],
        selected_gamma: gammas[sj],
        selected_index: (si, sj),
        per_fold,
    }
}

/// V-fold cross-validation over the `(lambda, gamma)` grid.
///
/// For every fold, the model is fit to the variation tensor of all samples
/// outside the fold and scored by the variation-matrix loss against the
/// fold's own variation tensor; scores are summed over folds. Fits start
/// cold at every cell.
pub fn cv_select(
    data: &CompositionDataset,
    grid: &TuningGrid,
    cfg: &SolverConfig,
) -> Result<CvReport> {
    grid.validate()?;
    let folds = make_folds(&data.sizes(), grid.folds, grid.seed)?;
    let pairs = (0..grid.folds)
        .map(|v| {
            let (train, test) = split_rows(&folds, v);
            Ok((
                variation_tensor_of_rows(data, &train)?,
                variation_tensor_of_rows(data, &test)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = score_cells(&pairs, &grid.lambdas, &grid.gammas, cfg)?;
    Ok(assemble(&grid.lambdas, &grid.gammas, pairs.len(), &cells))
}

/// Selection on a single held-out validation tensor, keeping the fit of the
/// chosen cell.
#[derive(Debug, Clone)]
pub struct ValidationSelection {
    pub report: CvReport,
    pub fit: FitResult,
}

pub fn validation_select(
    train: &VariationTensor,
    validation: &VariationTensor,
    lambdas: &[f64],
    gammas: &[f64],
    cfg: &SolverConfig,
) -> Result<ValidationSelection> {
    if lambdas.is_empty() || gammas.is_empty() {
        return Err(Error::Domain("tuning grid must be nonempty".into()));
    }
    let pairs = [(train.clone(), validation.clone())];
    let cells = score_cells(&pairs, lambdas, gammas, cfg)?;
    let report = assemble(lambdas, gammas, 1, &cells);
    let (i, j) = report.selected_index;
    let fit = cells
        .into_iter()
        .nth(i * gammas.len() + j)
        .expect("selected cell exists")
        .fit;
    Ok(ValidationSelection { report, fit })
}

/// Separate per-population tuning (`gamma = 0`): every population gets its
/// own lambda from its own single-population validation criterion. Returns
/// the stacked estimate and the per-population reports.
pub fn validation_select_separately(
    train: &VariationTensor,
    validation: &VariationTensor,
    lambdas_per_population: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<(CovarianceTensor, Vec<ValidationSelection>)> {
    let h_count = train.h_count();
    if lambdas_per_population.len() != h_count {
        return Err(Error::shape(
            format!("{h_count} lambda grids"),
            format!("{}", lambdas_per_population.len()),
        ));
    }
    let picks = (0..h_count)
        .map(|h| {
            let tr = VariationTensor::new(vec![train.slice(h).clone()])?;
            let va = VariationTensor::new(vec![validation.slice(h).clone()])?;
            validation_select(&tr, &va, &lambdas_per_population[h], &[0.0], cfg)
                .map_err(|e| e.context(format!("population {h}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let slices = picks.iter().map(|s| s.fit.estimate.slice(0).clone()).collect();
    Ok((CovarianceTensor::new(slices)?, picks))
}
