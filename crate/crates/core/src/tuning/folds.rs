use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fold label of every sample, per population.
///
/// Within each population a seeded uniform permutation is dealt round-robin
/// into `v` folds, so fold sizes differ by at most one.
pub fn make_folds(sizes: &[usize], v: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if v < 2 {
        return Err(Error::Domain(format!("need at least 2 folds, got {v}")));
    }
    if let Some(&min) = sizes.iter().min() {
        if v > min {
            return Err(Error::Domain(format!(
                "{v} folds but the smallest population has {min} samples"
            )));
        }
    } else {
        return Err(Error::Domain("no populations to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sizes
        .iter()
        .map(|&n| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut fold = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                fold[i] = rank % v;
            }
            fold
        })
        .collect())
}

/// Row indices `(outside fold, inside fold)` of every population.
pub fn split_rows(folds: &[Vec<usize>], fold: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    folds
        .iter()
        .map(|labels| {
            let (inside, outside): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| labels[i] == fold);
            (outside, inside)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_split() {
        let f = make_folds(&[10, 10], 5, 3).unwrap();
        for labels in &f {
            for v in 0..5 {
                assert_eq!(labels.iter().filter(|&&l| l == v).count(), 2);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(&[7, 9], 3, 11).unwrap(), make_folds(&[7, 9], 3, 11).unwrap());
        assert_ne!(make_folds(&[30], 3, 11).unwrap(), make_folds(&[30], 3, 12).unwrap());
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(make_folds(&[10], 1, 0).is_err());
        assert!(make_folds(&[10, 3], 4, 0).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let f = make_folds(&[8], 4, 0).unwrap();
        let (train, test) = split_rows(&f, 2);
        assert_eq!(train[0].len(), 6);
        assert_eq!(test[0].len(), 2);
        let mut all: Vec<usize> = train[0].iter().chain(&test[0]).copied().collect();
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }
}
