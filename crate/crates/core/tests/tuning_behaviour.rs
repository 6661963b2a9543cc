mod common;

use common::*;
use mcc_core::compositional::{
    model_truth, simulate_dataset, variation_tensor, variation_tensor_of_rows, CompositionDataset,
    GroundTruthSpec, ModelId,
};
use mcc_core::solver::loss;
use mcc_core::tuning::{bootstrap_stability, cv_select, make_folds, split_rows, TuningGrid};
use mcc_core::{fit, CovarianceTensor, SolverConfig};
use nalgebra::DMatrix;

fn model1_data(n: usize, p: usize, seed: u64) -> CompositionDataset {
    let truth = model_truth(&GroundTruthSpec::new(ModelId::Model1, p).unwrap()).unwrap();
    simulate_dataset(&truth, &[n; 4], seed).unwrap()
}

#[test]
fn folds_split_evenly_and_deterministically() {
    let folds = make_folds(&[10, 10], 5, 3).unwrap();
    for pop in &folds {
        for v in 0..5 {
            assert_eq!(pop.iter().filter(|&&f| f == v).count(), 2);
        }
    }
    assert_eq!(folds, make_folds(&[10, 10], 5, 3).unwrap());
    assert!(make_folds(&[10, 10], 1, 3).is_err());
    assert!(make_folds(&[10, 4], 5, 3).is_err());
}

#[test]
fn single_cell_score_is_sum_of_held_out_losses() {
    let data = model1_data(20, 8, 1);
    let grid = TuningGrid::new(vec![0.2], vec![0.1], 4, 9).unwrap();
    let cfg = SolverConfig::default();
    let report = cv_select(&data, &grid, &cfg).unwrap();
    assert_eq!(report.selected_index, (0, 0));
    assert_eq!((report.selected_lambda, report.selected_gamma), (0.2, 0.1));

    let folds = make_folds(&data.sizes(), 4, 9).unwrap();
    let mut total = 0.0;
    for v in 0..4 {
        let (train, test) = split_rows(&folds, v);
        let tr = variation_tensor_of_rows(&data, &train).unwrap();
        let te = variation_tensor_of_rows(&data, &test).unwrap();
        let est = fit(&tr, &SolverConfig::new(0.2, 0.1), None).unwrap().estimate;
        total += loss(&est, &te).unwrap();
    }
    assert!((report.scores[0][0] - total).abs() <= 1e-9 * total);
}

#[test]
fn model1_cross_validation_selects_a_penalty() {
    let data = model1_data(50, 20, 2);
    let theta = variation_tensor(&data).unwrap();
    let mut grid = TuningGrid::default_for(&theta, Default::default(), 5, 4).unwrap();
    grid.lambdas = grid.lambdas.iter().step_by(2).copied().collect();
    grid.gammas = vec![grid.gammas[0], grid.gammas[2], 0.0];
    let report = cv_select(&data, &grid, &SolverConfig::default()).unwrap();
    assert!(report.selected_lambda > 0.0);
    assert!(report.scores.iter().flatten().all(|s| s.is_finite()));
    let best = report.scores[report.selected_index.0][report.selected_index.1];
    assert!(report.scores.iter().flatten().all(|&s| s >= best));
}

#[test]
fn duplicated_best_cell_is_selected_once() {
    let data = model1_data(20, 8, 3);
    let cfg = SolverConfig::default();
    let grid = TuningGrid::new(vec![0.5, 0.2, 0.05], vec![0.1, 0.0], 4, 1).unwrap();
    let first = cv_select(&data, &grid, &cfg).unwrap();
    let (bi, _) = first.selected_index;
    let mut lambdas = grid.lambdas.clone();
    lambdas.insert(bi, lambdas[bi]);
    let dup = TuningGrid { lambdas, ..grid.clone() };
    let second = cv_select(&data, &dup, &cfg).unwrap();
    assert_eq!(second.selected_lambda, first.selected_lambda);
    assert_eq!(second.selected_gamma, first.selected_gamma);
    assert_eq!(second.selected_index.0, bi);
    assert_eq!(
        second.scores[second.selected_index.0][second.selected_index.1],
        first.scores[first.selected_index.0][first.selected_index.1]
    );
    assert_eq!(cv_select(&data, &dup, &cfg).unwrap(), second);
}

fn strong_edge_data(n: usize, seed: u64) -> CompositionDataset {
    let mut omega = DMatrix::identity(5, 5);
    omega[(0, 1)] = 0.8;
    omega[(1, 0)] = 0.8;
    let truth = CovarianceTensor::new(vec![omega]).unwrap();
    simulate_dataset(&truth, &[n], seed).unwrap()
}

#[test]
fn strong_edge_is_selected_in_every_replicate() {
    let data = strong_edge_data(2000, 5);
    let b = 8;
    let report = bootstrap_stability(&data, b, &SolverConfig::new(0.5, 0.0), 17).unwrap();
    let e = report.edges.iter().position(|&(j, k)| (j, k) == (0, 1)).unwrap();
    assert_eq!(report.point_signs[0][e], 1);
    assert_eq!(report.selection_counts[0][e], b);
    assert_eq!(report.successful, b);
}

#[test]
fn single_replicate_gives_binary_frequencies() {
    let data = model1_data(30, 8, 6);
    let report = bootstrap_stability(&data, 1, &SolverConfig::new(0.3, 0.3), 2).unwrap();
    assert_eq!(report.threshold, 1);
    assert!(report.selection_counts.iter().flatten().all(|&c| c <= 1));
    for h in 0..4 {
        for e in 0..report.edges.len() {
            let pct = report.selection_pct(h, e).unwrap();
            assert!(pct == 0.0 || pct == 100.0, "{pct}");
        }
        let pop = &report.populations[h];
        assert!(pop.stable <= pop.positive + pop.negative);
    }
}

#[test]
fn identical_populations_have_no_distinct_edges() {
    let block = model1_data(40, 8, 7).population(0).clone();
    let data = CompositionDataset::new(vec![block.clone(), block], vec!["a".into(), "b".into()], None).unwrap();
    let report = bootstrap_stability(&data, 3, &SolverConfig::new(0.2, 0.1), 1).unwrap();
    assert_eq!(report.point_signs[0], report.point_signs[1]);
    assert_eq!(report.distinct.len(), 2);
    assert!(report.distinct.iter().all(|d| d.count == 0));
}

#[test]
fn signed_counts_match_point_support() {
    let data = model1_data(30, 8, 8);
    let cfg = SolverConfig::new(0.2, 0.2);
    let report = bootstrap_stability(&data, 4, &cfg, 3).unwrap();
    let point = fit(&variation_tensor(&data).unwrap(), &cfg, None).unwrap().estimate;
    for (h, pop) in report.populations.iter().enumerate() {
        let s = point.slice(h);
        let support = (0..8)
            .flat_map(|j| (j + 1..8).map(move |k| (j, k)))
            .filter(|&(j, k)| s[(j, k)].abs() > 1e-8)
            .count();
        assert_eq!(pop.positive + pop.negative, support);
    }
    assert!(report.selection_counts.iter().flatten().all(|&c| c <= 4));
}

#[test]
fn bootstrap_is_reproducible() {
    let data = model1_data(25, 8, 9);
    let cfg = SolverConfig::new(0.2, 0.2);
    let a = bootstrap_stability(&data, 5, &cfg, 11).unwrap();
    let b = bootstrap_stability(&data, 5, &cfg, 11).unwrap();
    assert_eq!(a, b);
    let c = bootstrap_stability(&data, 5, &cfg, 12).unwrap();
    assert_eq!(a.point_signs, c.point_signs);
}

#[test]
fn cross_validation_is_reproducible() {
    let data = model1_data(20, 8, 10);
    let grid = TuningGrid::new(vec![0.4, 0.1], vec![0.2, 0.0], 3, 5).unwrap();
    let cfg = SolverConfig::default();
    assert_eq!(cv_select(&data, &grid, &cfg).unwrap(), cv_select(&data, &grid, &cfg).unwrap());
}
