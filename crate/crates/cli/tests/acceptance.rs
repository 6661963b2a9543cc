//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness and exits nonzero if any criterion fails.

use std::time::Instant;

use mcc_cli::args::{SimulateArgs, SolverArgs};
use mcc_cli::commands::cmd_simulate;
use mcc_cli::experiment::{run_simulation, Method, SimulationConfig};
use mcc_core::compositional::{
    closed_form_diagonal, model_truth, simulate_dataset, GroundTruthSpec, MODEL_POPULATIONS,
};
use mcc_core::metrics::{error_norms, tpr_tnr};
use mcc_core::solver::{grad_loss, loss, project_psd_floor, prox_fiber, EigenFloor, StepRecord};
use mcc_core::tuning::bootstrap_stability;
use mcc_core::{fit, CovarianceTensor, FitResult, ModelId, SolverConfig, VariationTensor};
use mcc_testkit::{nearest_floored, penalized_optimum, sparse_group_prox};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn spd(p: usize, ridge: f64, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = normal(p, p, r);
    &b * b.transpose() / p as f64 + DMatrix::identity(p, p) * ridge
}

/// Accepted steps collected from criteria 5 to 7.
#[derive(Default)]
struct StepLog(Vec<(String, Vec<StepRecord>)>);

impl StepLog {
    fn keep(&mut self, label: &str, res: &FitResult) {
        self.0.push((label.to_string(), res.steps.clone()));
    }
}

fn worked_example() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, 3.83, 2.45, 3.83, 0.0, 1.24, 2.45, 1.24, 0.0])
}

fn c1_closed_form() -> Outcome {
    let w = closed_form_diagonal(&worked_example()).map_err(|e| e.to_string())?;
    let err = (w[2] + 0.07).abs();
    check(err <= 1e-10, format!("omega_3 = {:.12}, |error| = {err:.1e}", w[2]))
}

fn c2_gradient() -> Outcome {
    let mut r = rng(101);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let omega = CovarianceTensor::new(vec![spd(6, 0.2, &mut r), spd(6, 0.2, &mut r)]).unwrap();
        let truth = CovarianceTensor::new(vec![spd(6, 0.2, &mut r), spd(6, 0.2, &mut r)]).unwrap();
        let theta = VariationTensor::from_covariance(&truth).unwrap();
        let g = grad_loss(&omega, &theta).unwrap();
        for s in 0..2 {
            for j in 0..6 {
                for k in 0..6 {
                    let mut up = omega.clone();
                    up.slice_mut(s)[(j, k)] += h;
                    let mut down = omega.clone();
                    down.slice_mut(s)[(j, k)] -= h;
                    let fd = (loss(&up, &theta).unwrap() - loss(&down, &theta).unwrap()) / (2.0 * h);
                    let an = g.slice(s)[(j, k)];
                    worst = worst.max((fd - an).abs() / an.abs().max(1.0));
                }
            }
        }
    }
    check(worst <= 1e-6, format!("max relative error {worst:.2e} over 20 instances"))
}

/// Largest violation of the subgradient condition `y - x in t.d|x| + g d||x||`.
fn prox_gap(y: &[f64], x: &[f64], t: &[f64], g: f64) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let w = y
            .iter()
            .zip(t)
            .map(|(&yi, &ti)| (yi.abs() - ti).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        return (w - g).max(0.0);
    }
    (0..y.len())
        .map(|i| {
            let rest = y[i] - x[i] - g * x[i] / norm;
            if x[i] != 0.0 {
                (rest - t[i] * x[i].signum()).abs()
            } else {
                (rest.abs() - t[i]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn c3_prox() -> Outcome {
    let mut r = rng(102);
    let (mut gap, mut diff): (f64, f64) = (0.0, 0.0);
    for case in 0..100 {
        let h = 1 + case % 5;
        let y: Vec<f64> = (0..h).map(|_| r.random_range(-3.0..3.0)).collect();
        let t: Vec<f64> = (0..h).map(|_| r.random_range(0.0..1.0)).collect();
        let g = r.random_range(0.0..2.0);
        let mut x = y.clone();
        prox_fiber(&mut x, &t, g);
        gap = gap.max(prox_gap(&y, &x, &t, g));
        let reference = sparse_group_prox(&y, &t, g);
        diff = x.iter().zip(&reference).fold(diff, |m, (a, b)| m.max((a - b).abs()));
    }
    check(
        gap <= 1e-8 && diff <= 1e-6,
        format!("max optimality gap {gap:.1e}, max distance to numerical minimizer {diff:.1e}"),
    )
}

fn c4_projection() -> Outcome {
    let mut r = rng(103);
    let eps = 0.1;
    let (mut dist, mut min_eig): (f64, f64) = (0.0, f64::INFINITY);
    for _ in 0..20 {
        let a = normal(5, 5, &mut r);
        let a = (&a + a.transpose()) * 0.5;
        let got = project_psd_floor(&a, EigenFloor::Floor(eps)).unwrap();
        dist = dist.max((&got - nearest_floored(&a, eps)).norm());
        min_eig = min_eig.min(got.symmetric_eigen().eigenvalues.min());
    }
    check(
        dist <= 1e-6 && min_eig >= eps - 1e-8,
        format!("max Frobenius distance {dist:.1e}, min eigenvalue {min_eig:.6} (eps {eps})"),
    )
}

/// Circulant slice: `c` at offset 1, `-c` at offset 2, `sigma` on the
/// diagonal. Rows of off-diagonal entries sum to zero, so the variation
/// matrix identifies the diagonal.
fn balanced_ring(p: usize, c: f64, sigma: f64) -> DMatrix<f64> {
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

fn c5_exact_fit(log: &mut StepLog) -> Outcome {
    let truth = CovarianceTensor::new(vec![balanced_ring(20, 0.3, 2.0), balanced_ring(20, -0.25, 1.5)]).unwrap();
    let min_eig = truth.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
    let theta = VariationTensor::from_covariance(&truth).unwrap();
    let res = fit(&theta, &SolverConfig::new(0.0, 0.0).recording_steps(), None).map_err(|e| e.to_string())?;
    log.keep("exact fit", &res);
    let l = loss(&res.estimate, &theta).unwrap();
    let d = (0..2)
        .map(|h| (res.estimate.diagonal(h) - truth.diagonal(h)).amax())
        .fold(0.0, f64::max);
    check(
        min_eig > 1e-4 && l <= 1e-6 && d <= 1e-4,
        format!("p=20 H=2, truth min eigenvalue {min_eig:.3}, loss {l:.1e}, max diagonal error {d:.1e}, {} iterations", res.iterations),
    )
}

fn c6_collapse(log: &mut StepLog) -> Outcome {
    let t = DMatrix::from_row_slice(4, 4, &[
        0.0, 3.0, 2.5, 2.8, //
        3.0, 0.0, 2.9, 3.1, //
        2.5, 2.9, 0.0, 2.2, //
        2.8, 3.1, 2.2, 0.0,
    ]);
    let closed = closed_form_diagonal(&t).unwrap();
    if !closed.iter().all(|&v| v > 1e-4) {
        return Err("instance does not satisfy the precondition".into());
    }
    let theta = VariationTensor::new(vec![t]).unwrap();
    let res = fit(&theta, &SolverConfig::new(1e6, 0.0).recording_steps(), None).map_err(|e| e.to_string())?;
    log.keep("collapse", &res);
    let est = res.estimate.slice(0);
    let (mut off, mut diag): (f64, f64) = (0.0, 0.0);
    for j in 0..4 {
        for k in 0..4 {
            if j != k {
                off = off.max(est[(j, k)].abs());
            }
        }
        diag = diag.max((est[(j, j)] - closed[j]).abs());
    }
    check(off <= 1e-6 && diag <= 1e-4, format!("max |off-diagonal| {off:.1e}, max diagonal error {diag:.1e}"))
}

fn c7_small_optimality(log: &mut StepLog) -> Outcome {
    let mut r = rng(107);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        // Theta_12 > Theta_13 + Theta_23 puts the unpenalized diagonal below
        // the floor, so neither the floor nor the penalties are idle.
        let a = r.random_range(0.5..2.0);
        let b = r.random_range(0.5..2.0);
        let c = (a + b) * r.random_range(1.05..1.6);
        let t = DMatrix::from_row_slice(3, 3, &[0.0, c, a, c, 0.0, b, a, b, 0.0]);
        let lambda = r.random_range(0.05..1.0);
        let gamma = r.random_range(0.0..0.5);
        let theta = VariationTensor::new(vec![t.clone()]).unwrap();
        let cfg = SolverConfig::new(lambda, gamma).with_tol(1e-10).recording_steps();
        let res = fit(&theta, &cfg, None).map_err(|e| e.to_string())?;
        log.keep(&format!("small instance {case}"), &res);
        let (reference, _) = penalized_optimum(&[t], &[lambda], gamma, 1e-4);
        let rel = ((res.final_objective() - reference) / reference).abs();
        if !res.estimate.is_feasible(1e-4) {
            return Err(format!("case {case}: estimate violates the floor"));
        }
        worst = worst.max(rel);
    }
    check(worst <= 1e-4, format!("max relative objective gap {worst:.1e} over 10 instances (solver tol 1e-10)"))
}

fn c8_backtracking(log: &StepLog) -> Outcome {
    let mut total = 0;
    for (label, steps) in &log.0 {
        if steps.is_empty() {
            return Err(format!("{label}: no steps recorded"));
        }
        for s in steps {
            total += 1;
            if !(s.loss <= s.surrogate) {
                return Err(format!("{label}, iteration {}: loss {} > surrogate {}", s.iteration, s.loss, s.surrogate));
            }
        }
    }
    check(total > 0, format!("{total} accepted steps over {} fits, loss <= surrogate in all", log.0.len()))
}

fn c9_model1_ordering() -> Outcome {
    let cfg = SimulationConfig::new(ModelId::Model1, 50, 40, 10, 2024);
    let start = Instant::now();
    let out = run_simulation(&cfg).map_err(|e| format!("{e:#}"))?;
    let secs = start.elapsed().as_secs_f64();
    let mcc = out.summary(Method::Mcc).unwrap();
    let sep = out.summary(Method::MccH).unwrap();
    check(
        mcc.tpr >= sep.tpr + 0.15 && mcc.frob_per_p <= sep.frob_per_p && secs <= 900.0,
        format!(
            "TPR MCC {:.3} vs MCC-H {:.3}; correlation frob/p MCC {:.4} vs MCC-H {:.4}; {secs:.0} s",
            mcc.tpr, sep.tpr, mcc.frob_per_p, sep.frob_per_p
        ),
    )
}

fn c10_metrics() -> Outcome {
    let mut r = rng(110);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let est = CovarianceTensor::new((0..3).map(|_| normal(7, 7, &mut r)).collect()).unwrap();
        let truth = CovarianceTensor::new((0..3).map(|_| normal(7, 7, &mut r)).collect()).unwrap();
        let got = error_norms(&est, &truth).unwrap();
        let (mut frob, mut l1) = (0.0, 0.0);
        for h in 0..3 {
            let mut sq = 0.0;
            let mut cols = [0.0f64; 7];
            for j in 0..7 {
                for k in 0..7 {
                    let d = est.slice(h)[(j, k)] - truth.slice(h)[(j, k)];
                    sq += d * d;
                    cols[k] += d.abs();
                }
            }
            frob += sq.sqrt();
            l1 += cols.iter().copied().fold(0.0, f64::max);
        }
        worst = worst
            .max((got.frob_per_p - frob / 21.0).abs())
            .max((got.l1_per_p - l1 / 21.0).abs());
    }
    if worst > 1e-12 {
        return Err(format!("error_norms differs from the naive loops by {worst:.1e}"));
    }
    for model in [ModelId::Model1, ModelId::Model2, ModelId::Model3] {
        let truth = model_truth(&GroundTruthSpec::new(model, 12).unwrap()).unwrap();
        let same = tpr_tnr(&truth, &truth).unwrap();
        let diag = CovarianceTensor::from_diagonals(
            &(0..truth.h_count()).map(|h| truth.diagonal(h)).collect::<Vec<_>>(),
        )
        .unwrap();
        let empty = tpr_tnr(&diag, &truth).unwrap();
        if (same.tpr, same.tnr) != (1.0, 1.0) || (empty.tpr, empty.tnr) != (0.0, 1.0) {
            return Err(format!(
                "model {}: est = truth gives ({}, {}), diagonal gives ({}, {})",
                model.number(), same.tpr, same.tnr, empty.tpr, empty.tnr
            ));
        }
    }
    Ok(format!("naive recomputation within {worst:.1e}; rates (1,1) and (0,1) for models 1-3"))
}

fn simulate_args(out: &std::path::Path) -> SimulateArgs {
    SimulateArgs {
        model: 1,
        n: 50,
        p: 40,
        reps: 3,
        seed: 11,
        methods: vec!["mcc".into(), "mcc-h".into(), "oracle".into()],
        n_lambda: 8,
        lambda_min_ratio: 0.01,
        gamma_fractions: vec![0.3, 0.1],
        solver: SolverArgs {
            epsilon: EigenFloor::default(),
            tol: mcc_core::solver::DEFAULT_TOL,
            max_iter: mcc_core::solver::DEFAULT_MAX_ITER,
            allow_nonconverged: false,
        },
        out: out.to_path_buf(),
    }
}

fn c11_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        cmd_simulate(&simulate_args(&out)).map_err(|e| format!("{e:#}"))?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        tables.push((read("metrics.tsv")?, read("replicates.tsv")?));
    }
    if tables[0] != tables[1] {
        return Err("simulation tables differ between identical runs".into());
    }

    // Bootstrap: the report after k replicates is the running tally of the
    // first k, so equal reports for every k mean equal replicates.
    let truth = model_truth(&GroundTruthSpec::new(ModelId::Model1, 12).unwrap()).unwrap();
    let data = simulate_dataset(&truth, &[40; MODEL_POPULATIONS], 5).unwrap();
    let cfg = SolverConfig::new(0.3, 0.3);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let reps = 8;
    for k in 1..=reps {
        let a = bootstrap_stability(&data, k, &cfg, 99).map_err(|e| e.to_string())?;
        let b = bootstrap_stability(&data, k, &cfg, 99).map_err(|e| e.to_string())?;
        let c = single.install(|| bootstrap_stability(&data, k, &cfg, 99)).map_err(|e| e.to_string())?;
        if a != b || a != c {
            return Err(format!("bootstrap reports differ after {k} replicates"));
        }
    }
    Ok(format!(
        "simulate tables byte-identical ({} + {} bytes); bootstrap tallies identical after each of {reps} replicates",
        tables[0].0.len(),
        tables[0].1.len()
    ))
}

fn main() {
    let mut log = StepLog::default();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if res.is_err() {
            failures += 1;
        }
        println!("{tag} criterion {n:>2} {name}: {detail} [{secs:.1} s]");
    };
    report(1, "closed-form diagonal", &mut c1_closed_form);
    report(2, "gradient oracle", &mut c2_gradient);
    report(3, "prox oracle", &mut c3_prox);
    report(4, "eigenvalue floor projection oracle", &mut c4_projection);
    report(5, "exact-fit fixed point", &mut || c5_exact_fit(&mut log));
    report(6, "large-lambda collapse", &mut || c6_collapse(&mut log));
    report(7, "small-instance global optimality", &mut || c7_small_optimality(&mut log));
    report(8, "backtracking contract", &mut || c8_backtracking(&log));
    report(9, "model 1 ordering", &mut c9_model1_ordering);
    report(10, "metrics oracles", &mut c10_metrics);
    report(11, "reproducibility", &mut c11_reproducibility);
    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
}
