use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compositional::{variation_tensor, CompositionDataset};
use crate::error::{Error, Result};
use crate::metrics::is_nonzero;
use crate::par;
use crate::solver::{fit, SolverConfig};
use crate::tensor::CovarianceTensor;

/// Fraction of replicates an edge must appear in to count as stable.
pub const STABLE_FRACTION: f64 = 0.95;

/// Signed edges of one population's point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStability {
    pub positive: usize,
    pub negative: usize,
    /// Point-estimate edges selected in at least the stable threshold of replicates.
    pub stable: usize,
    /// `100 * stable / (positive + negative)`; `None` without edges.
    pub stability_pct: Option<f64>,
}

/// Edges nonzero in every population of the point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedStability {
    pub same_sign: usize,
    pub different_sign: usize,
    /// Shared edges that were nonzero in every population together in at
    /// least the stable threshold of replicates.
    pub stable: usize,
    pub stability_pct: Option<f64>,
}

/// Edges nonzero in exactly one population of the point estimate.
/// For two populations these are the D1 / D2 tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctStability {
    pub population: usize,
    pub count: usize,
    /// Distinct edges nonzero in that population in at least the stable
    /// threshold of replicates.
    pub stable: usize,
    pub stability_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub replicates: usize,
    /// Replicates whose fit succeeded; frequencies are out of this count.
    pub successful: usize,
    /// `(replicate, error message)` of the excluded replicates.
    pub failed: Vec<(usize, String)>,
    /// Minimum selection count for an edge to be stable.
    pub threshold: usize,
    pub population_names: Vec<String>,
    /// Unordered pairs `(j, k)`, `j < k`, in row-major order.
    pub edges: Vec<(usize, usize)>,
    /// Sign (-1, 0, 1) of every edge in the point estimate, per population.
    pub point_signs: Vec<Vec<i8>>,
    /// Replicates in which each edge was nonzero, per population.
    pub selection_counts: Vec<Vec<usize>>,
    /// Replicates in which each edge was nonzero in all populations at once.
    pub joint_counts: Vec<usize>,
    pub populations: Vec<PopulationStability>,
    pub shared: SharedStability,
    pub distinct: Vec<DistinctStability>,
    /// Whether the point fit and every successful replicate converged.
    pub all_converged: bool,
}

impl StabilityReport {
    /// Percentage of successful replicates in which edge `e` was nonzero in
    /// population `h`.
    pub fn selection_pct(&self, h: usize, e: usize) -> Option<f64> {
        pct(self.selection_counts[h][e], self.successful)
    }
}

fn pct(stable: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * stable as f64 / total as f64)
}

fn signs(est: &CovarianceTensor, edges: &[(usize, usize)]) -> Vec<Vec<i8>> {
    est.slices()
        .iter()
        .map(|s| {
            edges
                .iter()
                .map(|&(j, k)| {
                    let v = s[(j, k)];
                    if !is_nonzero(v) {
                        0
                    } else if v > 0.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect()
}

/// Nonparametric bootstrap assessment of the estimated edges.
///
/// Fits once on the full data, then `b` times on datasets whose rows are
/// resampled with replacement within each population (sizes preserved),
/// keeping the penalties fixed. Replicate `r` draws from a `ChaCha8Rng`
/// seeded with `seed` on stream `r`, so reports are reproducible regardless
/// of scheduling. A replicate whose fit fails is recorded and left out.
pub fn bootstrap_stability(
    data: &CompositionDataset,
    b: usize,
    cfg_point: &SolverConfig,
    seed: u64,
) -> Result<StabilityReport> {
    if b == 0 {
        return Err(Error::Domain("need at least one bootstrap replicate".into()));
    }
    let p = data.dim();
    let h_count = data.h_count();
    let edges: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| ((j + 1)..p).map(move |k| (j, k)))
        .collect();

    let point = fit(&variation_tensor(data)?, cfg_point, None)
        .map_err(|e| e.context("point estimate"))?;
    let point_signs = signs(&point.estimate, &edges);

    let sizes = data.sizes();
    let replicates = par::map_indexed(b, |r| -> Result<(Vec<Vec<i8>>, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let rows: Vec<Vec<usize>> = sizes
            .iter()
            .map(|&n| (0..n).map(|_| rng.random_range(0..n)).collect())
            .collect();
        let resampled = data.select_rows(&rows)?;
        let out = fit(&variation_tensor(&resampled)?, cfg_point, None)?;
        Ok((signs(&out.estimate, &edges), out.converged))
    });

    let mut selection_counts = vec![vec![0usize; edges.len()]; h_count];
    let mut joint_counts = vec![0usize; edges.len()];
    let mut failed = Vec::new();
    let mut all_converged = point.converged;
    for (r, rep) in replicates.into_iter().enumerate() {
        match rep {
            Ok((s, converged)) => {
                all_converged &= converged;
                for e in 0..edges.len() {
                    let mut all = true;
                    for h in 0..h_count {
                        if s[h][e] != 0 {
                            selection_counts[h][e] += 1;
                        } else {
                            all = false;
                        }
                    }
                    joint_counts[e] += all as usize;
                }
            }
            Err(err) => failed.push((r, err.to_string())),
        }
    }
    let successful = b - failed.len();
    let threshold = (STABLE_FRACTION * successful as f64 - 1e-9).ceil().max(1.0) as usize;
    let stable_in = |count: usize| successful > 0 && count >= threshold;

    let populations = (0..h_count)
        .map(|h| {
            let positive = point_signs[h].iter().filter(|&&s| s > 0).count();
            let negative = point_signs[h].iter().filter(|&&s| s < 0).count();
            let stable = (0..edges.len())
                .filter(|&e| point_signs[h][e] != 0 && stable_in(selection_counts[h][e]))
                .count();
            PopulationStability {
                positive,
                negative,
                stable,
                stability_pct: pct(stable, positive + negative),
            }
        })
        .collect();

    let (mut same_sign, mut different_sign, mut shared_stable) = (0, 0, 0);
    let mut distinct: Vec<DistinctStability> = (0..h_count)
        .map(|h| DistinctStability {
            population: h,
            count: 0,
            stable: 0,
            stability_pct: None,
        })
        .collect();
    for e in 0..edges.len() {
        let present: Vec<usize> = (0..h_count).filter(|&h| point_signs[h][e] != 0).collect();
        if present.len() == h_count && h_count > 1 {
            let first = point_signs[0][e];
            if present.iter().all(|&h| point_signs[h][e] == first) {
                same_sign += 1;
            } else {
                different_sign += 1;
            }
            shared_stable += stable_in(joint_counts[e]) as usize;
        } else if present.len() == 1 && h_count > 1 {
            let h = present[0];
            distinct[h].count += 1;
            distinct[h].stable += stable_in(selection_counts[h][e]) as usize;
        }
    }
    for d in &mut distinct {
        d.stability_pct = pct(d.stable, d.count);
    }

    Ok(StabilityReport {
        replicates: b,
        successful,
        failed,
        threshold,
        population_names: data.population_names().to_vec(),
        edges,
        point_signs,
        selection_counts,
        joint_counts,
        populations,
        shared: SharedStability {
            same_sign,
            different_sign,
            stable: shared_stable,
            stability_pct: pct(shared_stable, same_sign + different_sign),
        },
        distinct,
        all_converged,
    })
}
