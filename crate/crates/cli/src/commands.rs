//! Subcommand implementations.
//!
//! Every command writes through an [`OutputDir`]; if the command fails, the
//! files it created (and the directory, if it created that too) are removed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcc_core::compositional::variation_tensor;
use mcc_core::metrics::to_correlation;
use mcc_core::tuning::{bootstrap_stability, cv_select, StabilityReport, TuningGrid};
use mcc_core::{fit, CompositionDataset, FitResult, ModelId, SolverConfig};
use serde::Serialize;

use crate::args::{CvArgs, DataArgs, EstimateArgs, ExportArgs, PenaltyArgs, SimulateArgs, SolverArgs, StabilityArgs};
use crate::experiment::{self, Method, SimulationConfig};
use crate::ingest::ingest_counts;
use crate::matrix_io::{file_stem, read_matrix, read_sidecar, write_json, write_matrix, Sidecar, SIDECAR_FORMAT};
use crate::network::to_dot;

/// Name of the sidecar written next to estimated matrices.
pub const ESTIMATE_SIDECAR: &str = "estimate.json";

/// What a successful command reports back to `main`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub converged: bool,
    pub allow_nonconverged: bool,
    pub files: Vec<PathBuf>,
}

/// Output directory that forgets its files unless the command finishes.
pub struct OutputDir {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    keep: bool,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            keep: false,
        })
    }

    fn claim(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        path
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.claim(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.claim(name);
        write_json(&path, value)
    }

    pub fn matrix(&mut self, name: &str, names: &[String], m: &nalgebra::DMatrix<f64>) -> Result<()> {
        let path = self.claim(name);
        write_matrix(&path, names, m)
    }

    pub fn finish(mut self, converged: bool, allow_nonconverged: bool) -> Outcome {
        self.keep = true;
        Outcome {
            converged,
            allow_nonconverged,
            files: std::mem::take(&mut self.files),
        }
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.keep {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Warning for a group penalty that cannot couple anything.
pub fn gamma_warning(h_count: usize, gamma: f64) -> Option<String> {
    (h_count == 1 && gamma > 0.0).then(|| {
        format!("gamma = {gamma} with a single population has no cross-population effect; it acts as extra lasso weight")
    })
}

fn solver_config(s: &SolverArgs, p: &PenaltyArgs) -> SolverConfig {
    let mut cfg = SolverConfig::new(p.lambda, p.gamma)
        .with_epsilon(s.epsilon)
        .with_tol(s.tol)
        .with_max_iter(s.max_iter);
    if let Some(l) = &p.per_population_lambda {
        cfg = cfg.with_per_population_lambda(l.clone());
    }
    cfg
}

fn load(d: &DataArgs) -> Result<CompositionDataset> {
    ingest_counts(&d.input, d.labels_column.as_deref(), d.pseudocount)
}

fn write_estimate(
    out: &mut OutputDir,
    data: &CompositionDataset,
    cfg: &SolverConfig,
    result: &FitResult,
    pseudocount: Option<f64>,
) -> Result<()> {
    let names = data.variable_names();
    let mut files = Vec::new();
    for (h, pop) in data.population_names().iter().enumerate() {
        let file = format!("{}.csv", file_stem(h, pop));
        out.matrix(&file, &names, result.estimate.slice(h))?;
        files.push(file);
    }
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.to_string(),
        p: data.dim(),
        populations: data.h_count(),
        population_names: data.population_names().to_vec(),
        variable_names: names,
        files,
        lambda: cfg.lambdas(data.h_count()),
        gamma: cfg.gamma,
        epsilon: cfg.epsilon.value(),
        converged: result.converged,
        iterations: result.iterations,
        objective: result.final_objective(),
        final_alpha: result.final_alpha,
        pseudocount,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    out.json(ESTIMATE_SIDECAR, &sidecar)
}

fn report_convergence(converged: bool, what: &str) {
    if !converged {
        warn(&format!("{what} did not converge within the iteration limit; outputs are flagged"));
    }
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<Outcome> {
    let data = load(&a.data)?;
    let cfg = solver_config(&a.solver, &a.penalty);
    cfg.validate(data.h_count())?;
    if let Some(w) = gamma_warning(data.h_count(), cfg.gamma) {
        warn(&w);
    }
    let result = fit(&variation_tensor(&data)?, &cfg, None).context("fitting")?;
    let mut out = OutputDir::create(&a.out)?;
    write_estimate(&mut out, &data, &cfg, &result, Some(a.data.pseudocount))?;
    report_convergence(result.converged, "the fit");
    Ok(out.finish(result.converged, a.solver.allow_nonconverged))
}

pub fn cmd_cv(a: &CvArgs) -> Result<Outcome> {
    let data = load(&a.data)?;
    let base = SolverConfig::new(0.0, 0.0)
        .with_epsilon(a.solver.epsilon)
        .with_tol(a.solver.tol)
        .with_max_iter(a.solver.max_iter);
    let theta = variation_tensor(&data)?;
    let default = TuningGrid::default_for(&theta, a.solver.epsilon, a.folds, a.seed)?;
    let sorted = |v: &Vec<f64>| {
        let mut v = v.clone();
        v.sort_by(|x, y| y.total_cmp(x));
        v.dedup();
        v
    };
    let grid = TuningGrid::new(
        a.lambdas.as_ref().map_or(default.lambdas.clone(), sorted),
        a.gammas.as_ref().map_or(default.gammas.clone(), sorted),
        a.folds,
        a.seed,
    )?;
    if let Some(w) = gamma_warning(data.h_count(), grid.gammas[0]) {
        warn(&w);
    }
    let report = cv_select(&data, &grid, &base).context("cross-validation")?;
    let cfg = SolverConfig {
        lambda: report.selected_lambda,
        gamma: report.selected_gamma,
        ..base
    };
    let result = fit(&theta, &cfg, None).context("refit at the selected penalties")?;

    let mut out = OutputDir::create(&a.out)?;
    let mut scores = String::from("lambda\tgamma\tscore\n");
    for (i, l) in report.lambdas.iter().enumerate() {
        for (j, g) in report.gammas.iter().enumerate() {
            scores.push_str(&format!("{l:?}\t{g:?}\t{:?}\n", report.scores[i][j]));
        }
    }
    out.text("cv_scores.tsv", &scores)?;
    out.json("cv.json", &report)?;
    write_estimate(&mut out, &data, &cfg, &result, Some(a.data.pseudocount))?;
    eprintln!(
        "selected lambda = {:.6e}, gamma = {:.6e}",
        report.selected_lambda, report.selected_gamma
    );
    let converged = report.all_converged() && result.converged;
    report_convergence(converged, "at least one fit");
    Ok(out.finish(converged, a.solver.allow_nonconverged))
}

pub fn simulation_config(a: &SimulateArgs) -> Result<SimulationConfig> {
    let mut cfg = SimulationConfig::new(ModelId::from_number(a.model)?, a.n, a.p, a.reps, a.seed);
    cfg.methods = a.methods.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
    cfg.n_lambda = a.n_lambda;
    cfg.lambda_min_ratio = a.lambda_min_ratio;
    cfg.gamma_fractions = a.gamma_fractions.clone();
    cfg.solver = SolverConfig::default()
        .with_epsilon(a.solver.epsilon)
        .with_tol(a.solver.tol)
        .with_max_iter(a.solver.max_iter);
    Ok(cfg)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let cfg = simulation_config(a)?;
    let outcome = experiment::run_simulation(&cfg)?;
    let mut out = OutputDir::create(&a.out)?;
    let table = experiment::metrics_table(&outcome);
    out.text("metrics.tsv", &table)?;
    out.text("replicates.tsv", &experiment::replicate_table(&outcome))?;
    print!("{table}");
    let converged = outcome.all_converged();
    report_convergence(converged, "at least one fit");
    Ok(out.finish(converged, a.solver.allow_nonconverged))
}

fn pct_cell(v: Option<f64>) -> String {
    v.map_or("---".to_string(), |x| format!("{x:.1}"))
}

/// Plain-text tallies: signed edges per population, shared edges and
/// population-specific edges, each with its stability percentage.
pub fn stability_text(r: &StabilityReport) -> String {
    let mut s = format!(
        "bootstrap replicates: {} ({} successful), stable if selected in >= {}\n\n",
        r.replicates, r.successful, r.threshold
    );
    s.push_str("All correlations\npopulation\tpositive\tnegative\tstability(%)\n");
    for (name, p) in r.population_names.iter().zip(&r.populations) {
        s.push_str(&format!("{name}\t{}\t{}\t{}\n", p.positive, p.negative, pct_cell(p.stability_pct)));
    }
    if r.population_names.len() > 1 {
        s.push_str("\nShared correlations\nsame sign\tdifferent sign\tstability(%)\n");
        s.push_str(&format!(
            "{}\t{}\t{}\n",
            r.shared.same_sign,
            r.shared.different_sign,
            pct_cell(r.shared.stability_pct)
        ));
        s.push_str("\nDistinct correlations\npopulation\tcount\tstability(%)\n");
        for d in &r.distinct {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                r.population_names[d.population],
                d.count,
                pct_cell(d.stability_pct)
            ));
        }
    }
    for (rep, err) in &r.failed {
        s.push_str(&format!("\nreplicate {} failed: {err}\n", rep + 1));
    }
    s
}

/// One row per variable pair: point-estimate sign and selection percentage
/// in every population.
pub fn edges_table(r: &StabilityReport, variables: &[String]) -> String {
    let mut s = String::from("var1\tvar2");
    for name in &r.population_names {
        s.push_str(&format!("\tsign_{name}\tselected_pct_{name}"));
    }
    s.push('\n');
    for (e, &(j, k)) in r.edges.iter().enumerate() {
        s.push_str(&format!("{}\t{}", variables[j], variables[k]));
        for h in 0..r.population_names.len() {
            s.push_str(&format!("\t{}\t{}", r.point_signs[h][e], pct_cell(r.selection_pct(h, e))));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_stability(a: &StabilityArgs) -> Result<Outcome> {
    let data = load(&a.data)?;
    let cfg = solver_config(&a.solver, &a.penalty);
    cfg.validate(data.h_count())?;
    if let Some(w) = gamma_warning(data.h_count(), cfg.gamma) {
        warn(&w);
    }
    let report = bootstrap_stability(&data, a.bootstrap, &cfg, a.seed)?;
    if report.successful == 0 {
        bail!("every bootstrap replicate failed; first error: {}", report.failed[0].1);
    }
    let mut out = OutputDir::create(&a.out)?;
    let text = stability_text(&report);
    out.text("stability.txt", &text)?;
    out.json("stability.json", &report)?;
    out.text("edges.tsv", &edges_table(&report, &data.variable_names()))?;
    print!("{text}");
    report_convergence(report.all_converged, "at least one fit");
    Ok(out.finish(report.all_converged, a.solver.allow_nonconverged))
}

pub fn cmd_export_network(a: &ExportArgs) -> Result<Outcome> {
    let sidecar = read_sidecar(&a.input)?;
    let base = a.input.parent().unwrap_or(Path::new("."));
    let slices = sidecar
        .files
        .iter()
        .map(|f| {
            let (names, m) = read_matrix(&base.join(f))?;
            if names != sidecar.variable_names {
                bail!("{f}: variable names differ from the sidecar");
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let corr = to_correlation(&mcc_core::CovarianceTensor::new(slices)?)?;
    let mut out = OutputDir::create(&a.out)?;
    for (h, name) in sidecar.population_names.iter().enumerate() {
        let dot = to_dot(name, &sidecar.variable_names, corr.slice(h));
        out.text(&format!("network_{:02}.dot", h + 1), &dot)?;
    }
    Ok(out.finish(true, false))
}
