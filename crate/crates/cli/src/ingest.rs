//! Count tables to compositions.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mcc_core::CompositionDataset;
use nalgebra::DMatrix;

/// Population name used when the table has no label column.
pub const SINGLE_POPULATION: &str = "all";

/// Tab if the header line contains one, comma otherwise.
pub fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Read a delimited count table (one row per sample) into compositions.
///
/// Every count gets `pseudocount` added before its row is divided by the
/// row total. Rows are grouped by `label_column` in order of first
/// appearance; without a label column all rows form one population. Errors
/// name the 1-based line and the column.
pub fn ingest_counts(path: &Path, label_column: Option<&str>, pseudocount: f64) -> Result<CompositionDataset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ingest_counts_str(&text, label_column, pseudocount).with_context(|| format!("in {}", path.display()))
}

pub fn ingest_counts_str(text: &str, label_column: Option<&str>, pseudocount: f64) -> Result<CompositionDataset> {
    if !(pseudocount >= 0.0) || !pseudocount.is_finite() {
        bail!("pseudocount must be a finite nonnegative number, got {pseudocount}");
    }
    let header_line = text.lines().next().ok_or_else(|| anyhow!("input is empty"))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header_line))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| anyhow!("label column '{name}' not found in header {header:?}"))?,
        ),
        None => None,
    };
    let var_idx: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != label_idx).collect();
    if var_idx.is_empty() {
        bail!("no count columns in header");
    }
    let var_names: Vec<String> = var_idx.iter().map(|&i| header[i].clone()).collect();

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            bail!("line {line}: expected {} fields, found {}", header.len(), record.len());
        }
        let label = match label_idx {
            Some(i) => record[i].to_string(),
            None => SINGLE_POPULATION.to_string(),
        };
        let mut values = Vec::with_capacity(var_idx.len() + 1);
        for &i in &var_idx {
            let cell = &record[i];
            let col = || format!("line {line}, column {} ('{}')", i + 1, header[i]);
            let v: f64 = cell
                .parse()
                .map_err(|_| anyhow!("{}: '{cell}' is not a number", col()))?;
            if !v.is_finite() {
                bail!("{}: count {cell} is not finite", col());
            }
            if v < 0.0 {
                bail!("{}: negative count {v}", col());
            }
            if v + pseudocount <= 0.0 {
                bail!("{}: zero count with pseudocount 0; use a positive --pseudocount", col());
            }
            values.push(v + pseudocount);
        }
        let h = *index.entry(label.clone()).or_insert_with(|| {
            order.push(label);
            order.len() - 1
        });
        values.push(h as f64);
        rows.push(values);
    }
    let p = var_idx.len();
    let blocks = (0..order.len())
        .map(|h| {
            let members: Vec<&Vec<f64>> = rows.iter().filter(|r| r[p] as usize == h).collect();
            if members.len() < 2 {
                bail!("population '{}' has {} sample(s); at least 2 are needed", order[h], members.len());
            }
            Ok(DMatrix::from_fn(members.len(), p, |i, j| members[i][j]))
        })
        .collect::<Result<Vec<_>>>()?;
    if blocks.is_empty() {
        bail!("no samples after the header");
    }
    Ok(CompositionDataset::from_positive(blocks, order, Some(var_names))?)
}
