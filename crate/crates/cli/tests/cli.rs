use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mcc_cli::matrix_io::{read_matrix, read_sidecar};

fn mcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcc"))
        .args(args)
        .env("MCC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two populations of six samples over four taxa, with a few zeros.
fn write_counts(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("counts.csv");
    let mut text = String::from("site,t1,t2,t3,t4\n");
    let rows = [
        ("gut", [12, 0, 40, 7]),
        ("skin", [3, 30, 2, 9]),
        ("gut", [20, 5, 33, 10]),
        ("gut", [9, 2, 51, 4]),
        ("skin", [1, 25, 6, 14]),
        ("gut", [15, 8, 29, 0]),
        ("skin", [4, 41, 3, 11]),
        ("skin", [0, 19, 8, 7]),
        ("gut", [30, 3, 35, 12]),
        ("skin", [6, 28, 1, 13]),
        ("gut", [11, 6, 44, 6]),
        ("skin", [2, 35, 5, 9]),
    ];
    for (label, c) in rows {
        text.push_str(&format!("{label},{},{},{},{}\n", c[0], c[1], c[2], c[3]));
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn estimate_writes_round_trippable_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("est");
    let o = mcc(&[
        "estimate", "--input", input.to_str().unwrap(), "--labels-column", "site",
        "--lambda", "0.05", "--gamma", "0.05", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let side = read_sidecar(&out.join("estimate.json")).unwrap();
    assert_eq!(side.population_names, ["gut", "skin"]);
    assert_eq!(side.variable_names, ["t1", "t2", "t3", "t4"]);
    assert_eq!(side.lambda, vec![0.05, 0.05]);
    assert_eq!(side.pseudocount, Some(0.5));
    assert!(side.converged);
    for f in &side.files {
        let (names, m) = read_matrix(&out.join(f)).unwrap();
        assert_eq!(names, side.variable_names);
        assert_eq!(m, m.transpose());
        assert!(m.clone().symmetric_eigen().eigenvalues.min() >= 1e-4 - 1e-9);
    }

    // The network export reads the same files back.
    let net = dir.path().join("net");
    let o = mcc(&["export-network", "--input", out.join("estimate.json").to_str().unwrap(), "--out", net.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dot = fs::read_to_string(net.join("network_01.dot")).unwrap();
    assert!(dot.starts_with("graph \"gut\""));
}

#[test]
fn single_population_gamma_warns_and_proceeds() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("one.tsv");
    fs::write(&input, "t1\tt2\tt3\tt4\n3\t0\t5\t9\n8\t2\t1\t4\n6\t6\t0\t2\n1\t9\t4\t4\n").unwrap();
    let out = dir.path().join("est");
    let o = mcc(&[
        "estimate", "--input", input.to_str().unwrap(), "--lambda", "0.1", "--gamma", "0.2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("no cross-population effect"), "{}", stderr(&o));
    let side = read_sidecar(&out.join("estimate.json")).unwrap();
    assert_eq!(side.population_names, ["all"]);
    assert_eq!(side.p, 4);
}

#[test]
fn diagonal_estimate_exports_graph_without_edges() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("est");
    let o = mcc(&[
        "estimate", "--input", input.to_str().unwrap(), "--labels-column", "site",
        "--lambda", "1e6", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let net = dir.path().join("net");
    let o = mcc(&["export-network", "--input", out.join("estimate.json").to_str().unwrap(), "--out", net.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["network_01.dot", "network_02.dot"] {
        let dot = fs::read_to_string(net.join(f)).unwrap();
        assert_eq!(dot.matches(" -- ").count(), 0, "{dot}");
        assert_eq!(dot.lines().filter(|l| l.trim_start().starts_with("\"t")).count(), 4);
    }
}

#[test]
fn bad_input_fails_without_leaving_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.tsv");
    fs::write(&input, "a\tb\tc\n1\t2\t3\n4\toops\t6\n").unwrap();
    let out = dir.path().join("never");
    let o = mcc(&["estimate", "--input", input.to_str().unwrap(), "--lambda", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
    assert!(!out.exists());

    fs::write(&input, "a\tb\n0\t2\n4\t1\n").unwrap();
    let o = mcc(&[
        "estimate", "--input", input.to_str().unwrap(), "--pseudocount", "0", "--lambda", "0.1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zero count"));
}

#[test]
fn failed_export_removes_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("est");
    assert!(mcc(&[
        "estimate", "--input", input.to_str().unwrap(), "--labels-column", "site",
        "--lambda", "0.1", "--out", out.to_str().unwrap(),
    ])
    .status
    .success());
    // A corrupt matrix is only found after reading the first one.
    let side = read_sidecar(&out.join("estimate.json")).unwrap();
    fs::write(out.join(&side.files[1]), "t1,t2\n1,2\n").unwrap();
    let net = dir.path().join("net");
    let o = mcc(&["export-network", "--input", out.join("estimate.json").to_str().unwrap(), "--out", net.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!net.exists());
}

#[test]
fn nonconverged_fit_exits_3_unless_waived() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("est");
    let args = |extra: &'static [&'static str]| {
        let mut v = vec![
            "estimate".to_string(), "--input".into(), input.to_str().unwrap().into(),
            "--labels-column".into(), "site".into(), "--lambda".into(), "0.01".into(),
            "--max-iter".into(), "1".into(), "--tol".into(), "1e-15".into(),
            "--out".into(), out.to_str().unwrap().into(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let run = |v: Vec<String>| mcc(&v.iter().map(String::as_str).collect::<Vec<_>>());
    let o = run(args(&[]));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!read_sidecar(&out.join("estimate.json")).unwrap().converged);
    let o = run(args(&["--allow-nonconverged"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn cv_selects_from_grid_and_refits() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("cv");
    let o = mcc(&[
        "cv", "--input", input.to_str().unwrap(), "--labels-column", "site", "--folds", "3",
        "--lambdas", "0.01,0.1,1", "--gammas", "0,0.1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scores = fs::read_to_string(out.join("cv_scores.tsv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 6);
    let side = read_sidecar(&out.join("estimate.json")).unwrap();
    assert!([0.01, 0.1, 1.0].contains(&side.lambda[0]));
    assert!([0.0, 0.1].contains(&side.gamma));
}

#[test]
fn stability_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_counts(dir.path());
    let out = dir.path().join("stab");
    let o = mcc(&[
        "stability", "--input", input.to_str().unwrap(), "--labels-column", "site",
        "--lambda", "0.05", "--gamma", "0.05", "--bootstrap", "5", "--seed", "3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("stability.txt")).unwrap();
    for heading in ["All correlations", "Shared correlations", "Distinct correlations"] {
        assert!(text.contains(heading), "{text}");
    }
    let edges = fs::read_to_string(out.join("edges.tsv")).unwrap();
    assert_eq!(edges.lines().count(), 1 + 6);
}

#[test]
fn simulate_writes_metric_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = mcc(&[
        "simulate", "--model", "1", "--n", "50", "--p", "40", "--reps", "3", "--seed", "7",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method\tTPR\tTNR\tfrob/p\tl1/p");
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(methods, ["MCC", "MCC-H", "oracle-soft"]);
    for l in &lines[1..] {
        let cells: Vec<f64> = l.split('\t').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 4);
        assert!(cells[..2].iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
    let reps = fs::read_to_string(out.join("replicates.tsv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 3 * 3);
}

#[test]
fn invalid_thread_count_is_an_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_mcc"))
        .args(["export-network", "--input", "missing.json", "--out", "x"])
        .env("MCC_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MCC_THREADS"));
}
