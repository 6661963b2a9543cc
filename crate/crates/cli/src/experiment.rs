//! Simulation study on the synthetic models.
//!
//! Every replicate draws a training set and an independent validation set
//! of the same size from the model truth. Each estimator picks its tuning
//! parameters on the validation set and is scored against the truth.

use anyhow::{bail, Context, Result};
use mcc_core::compositional::{model_truth, simulate_with_basis, variation_tensor, MODEL_POPULATIONS};
use mcc_core::metrics::{evaluate, oracle_baseline, MetricsReport, ORACLE_LABEL};
use mcc_core::tuning::{log_spaced, penalty_scales, validation_select, validation_select_separately};
use mcc_core::{CovarianceTensor, GroundTruthSpec, ModelId, SolverConfig, VariationTensor};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Joint fit with the lasso and group penalties.
    Mcc,
    /// Separate single-population fits, each tuned on its own.
    MccH,
    /// Soft-thresholded sample covariance of the latent log-abundances.
    Oracle,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Mcc => "MCC",
            Method::MccH => "MCC-H",
            Method::Oracle => ORACLE_LABEL,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcc" => Ok(Method::Mcc),
            "mcc-h" | "mcch" => Ok(Method::MccH),
            "oracle" | "oracle-soft" => Ok(Method::Oracle),
            _ => bail!("unknown method '{s}', expected mcc, mcc-h or oracle"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub model: ModelId,
    /// Samples per population in both the training and the validation set.
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Lambda grid length; the grid runs down from the data's lambda_max.
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max.
    pub lambda_min_ratio: f64,
    /// Nonzero gammas as fractions of gamma_max; zero is always added.
    pub gamma_fractions: Vec<f64>,
    /// Penalty fields are overwritten per grid cell.
    pub solver: SolverConfig,
}

impl SimulationConfig {
    pub fn new(model: ModelId, n: usize, p: usize, reps: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            p,
            reps,
            seed,
            methods: vec![Method::Mcc, Method::MccH, Method::Oracle],
            n_lambda: 8,
            lambda_min_ratio: 0.01,
            gamma_fractions: vec![0.3, 0.1],
            solver: SolverConfig::default(),
        }
    }
}

/// Scores of one method on one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub method: Method,
    pub report: MetricsReport,
    /// Whether every fit behind the selected estimate converged.
    pub converged: bool,
    /// Selected penalties, when the method has them.
    pub lambdas: Vec<f64>,
    pub gamma: Option<f64>,
}

/// Averages of one method over the replicates.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub tpr: f64,
    pub tnr: f64,
    pub frob_per_p: f64,
    pub l1_per_p: f64,
    pub reps: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub replicates: Vec<ReplicateResult>,
    pub summaries: Vec<MethodSummary>,
}

impl SimulationOutcome {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn all_converged(&self) -> bool {
        self.replicates.iter().all(|r| r.converged)
    }
}

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

fn fit_mcc(
    train: &VariationTensor,
    val: &VariationTensor,
    cfg: &SimulationConfig,
) -> Result<(CovarianceTensor, bool, Vec<f64>, Option<f64>)> {
    let (lmax, gmax) = penalty_scales(train, cfg.solver.epsilon)?;
    let lambdas = log_spaced(lmax.max(f64::MIN_POSITIVE), cfg.lambda_min_ratio, cfg.n_lambda);
    let mut gammas: Vec<f64> = cfg.gamma_fractions.iter().map(|f| f * gmax).collect();
    gammas.push(0.0);
    let gammas = descending(gammas);
    let sel = validation_select(train, val, &lambdas, &gammas, &cfg.solver)?;
    let converged = sel.fit.converged;
    let lam = vec![sel.report.selected_lambda; train.h_count()];
    Ok((sel.fit.estimate, converged, lam, Some(sel.report.selected_gamma)))
}

fn fit_mcc_h(
    train: &VariationTensor,
    val: &VariationTensor,
    cfg: &SimulationConfig,
) -> Result<(CovarianceTensor, bool, Vec<f64>, Option<f64>)> {
    let grids = (0..train.h_count())
        .map(|h| {
            let slice = VariationTensor::new(vec![train.slice(h).clone()])?;
            let (lmax, _) = penalty_scales(&slice, cfg.solver.epsilon)?;
            Ok(log_spaced(lmax.max(f64::MIN_POSITIVE), cfg.lambda_min_ratio, cfg.n_lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    let (est, picks) = validation_select_separately(train, val, &grids, &cfg.solver)?;
    let converged = picks.iter().all(|s| s.fit.converged);
    let lam = picks.iter().map(|s| s.report.selected_lambda).collect();
    Ok((est, converged, lam, None))
}

/// Run every requested method on every replicate.
///
/// Replicate `r` uses seed `seed + 2r` for training and `seed + 2r + 1` for
/// validation, so results depend only on the configuration.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationOutcome> {
    if cfg.reps == 0 {
        bail!("need at least one replicate");
    }
    if cfg.methods.is_empty() {
        bail!("no methods requested");
    }
    if cfg.n_lambda == 0 || !(cfg.lambda_min_ratio > 0.0 && cfg.lambda_min_ratio <= 1.0) {
        bail!("lambda grid needs at least one value and a ratio in (0, 1]");
    }
    let spec = GroundTruthSpec::new(cfg.model, cfg.p)?;
    let truth = model_truth(&spec)?;
    let sizes = vec![cfg.n; MODEL_POPULATIONS];
    let mut replicates = Vec::with_capacity(cfg.reps * cfg.methods.len());
    for r in 0..cfg.reps {
        let base = cfg.seed.wrapping_add(2 * r as u64);
        let train = simulate_with_basis(&truth, &sizes, base)?;
        let val = simulate_with_basis(&truth, &sizes, base.wrapping_add(1))?;
        let theta_train = variation_tensor(&train.dataset)?;
        let theta_val = variation_tensor(&val.dataset)?;
        for &method in &cfg.methods {
            let (est, converged, lambdas, gamma) = match method {
                Method::Mcc => fit_mcc(&theta_train, &theta_val, cfg),
                Method::MccH => fit_mcc_h(&theta_train, &theta_val, cfg),
                Method::Oracle => {
                    let est = oracle_baseline(&train.log_basis, &val.log_basis, None)?;
                    Ok((est, true, Vec::new(), None))
                }
            }
            .with_context(|| format!("replicate {r}, method {}", method.label()))?;
            replicates.push(ReplicateResult {
                replicate: r,
                method,
                report: evaluate(&est, &truth)?,
                converged,
                lambdas,
                gamma,
            });
        }
    }
    let summaries = cfg
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.method == method).collect();
            let mean = |f: &dyn Fn(&ReplicateResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
            MethodSummary {
                method,
                tpr: mean(&|r| r.report.rates.tpr),
                tnr: mean(&|r| r.report.rates.tnr),
                frob_per_p: mean(&|r| r.report.correlation.frob_per_p),
                l1_per_p: mean(&|r| r.report.correlation.l1_per_p),
                reps: rows.len(),
            }
        })
        .collect();
    Ok(SimulationOutcome { replicates, summaries })
}

/// Fixed-precision cell for the metric tables.
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// Tab-separated summary table: method, TPR, TNR, frob/p, l1/p.
/// Error columns are on the correlation scale.
pub fn metrics_table(outcome: &SimulationOutcome) -> String {
    let mut out = String::from("method\tTPR\tTNR\tfrob/p\tl1/p\n");
    for s in &outcome.summaries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.method.label(),
            cell(s.tpr),
            cell(s.tnr),
            cell(s.frob_per_p),
            cell(s.l1_per_p)
        ));
    }
    out
}

/// One row per replicate and method, with both error scales and the
/// selected penalties.
pub fn replicate_table(outcome: &SimulationOutcome) -> String {
    let mut out = String::from(
        "replicate\tmethod\tTPR\tTNR\tfrob/p\tl1/p\tcov_frob/p\tcov_l1/p\tconverged\tlambda\tgamma\n",
    );
    for r in &outcome.replicates {
        let lambdas = if r.lambdas.is_empty() {
            "NA".to_string()
        } else {
            r.lambdas.iter().map(|&l| format!("{l:.6e}")).collect::<Vec<_>>().join(",")
        };
        let gamma = r.gamma.map_or("NA".to_string(), |g| format!("{g:.6e}"));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.replicate + 1,
            r.method.label(),
            cell(r.report.rates.tpr),
            cell(r.report.rates.tnr),
            cell(r.report.correlation.frob_per_p),
            cell(r.report.correlation.l1_per_p),
            cell(r.report.covariance.frob_per_p),
            cell(r.report.covariance.l1_per_p),
            r.converged,
            lambdas,
            gamma
        ));
    }
    out
}
