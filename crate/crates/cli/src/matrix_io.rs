//! Matrix files and their JSON sidecar.
//!
//! A matrix file is comma-separated: a header row of variable names, then
//! `p` rows of `p` values. Values are written in Rust's shortest
//! round-trip notation, so reading a file back gives the identical `f64`s.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const SIDECAR_FORMAT: &str = "mcc-matrices/1";

pub fn write_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(names)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let p = names.len();
    let mut values = Vec::with_capacity(p * p);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != p {
            bail!("{}: row {} has {} values, expected {p}", path.display(), i + 1, rec.len());
        }
        for (j, cell) in rec.iter().enumerate() {
            values.push(cell.parse::<f64>().with_context(|| {
                format!("{}: row {}, column {}: '{cell}'", path.display(), i + 1, j + 1)
            })?);
        }
    }
    if values.len() != p * p {
        bail!("{}: expected {p} rows, found {}", path.display(), values.len() / p.max(1));
    }
    Ok((names, DMatrix::from_row_slice(p, p, &values)))
}

/// Description of a set of per-population matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub p: usize,
    pub populations: usize,
    pub population_names: Vec<String>,
    pub variable_names: Vec<String>,
    /// Matrix file names relative to the sidecar, one per population.
    pub files: Vec<String>,
    pub lambda: Vec<f64>,
    pub gamma: f64,
    /// `None` when the eigenvalue floor was disabled.
    pub epsilon: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub final_alpha: f64,
    pub pseudocount: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s: Sidecar = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if s.format != SIDECAR_FORMAT {
        bail!("{}: unsupported format '{}'", path.display(), s.format);
    }
    Ok(s)
}

/// File-name-safe version of a population name.
pub fn file_stem(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("omega_{:02}_{clean}", index + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[0.1 + 0.2, -1e-300, 1.0 / 3.0, 12345.678901234567]);
        let names = vec!["a,b".to_string(), "c".to_string()];
        write_matrix(&path, &names, &m).unwrap();
        let (n, back) = read_matrix(&path).unwrap();
        assert_eq!(n, names);
        assert_eq!(back, m);
    }

    #[test]
    fn stems_are_safe() {
        assert_eq!(file_stem(0, "CFS patients/2"), "omega_01_CFS_patients_2");
    }
}
