use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subject indices of one cross-validation fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions subjects `0..labels.len()` into `k` shuffled folds. Fold `i`
/// tests on part `i`, validates on part `(i + 1) mod k` and trains on the
/// rest. With `stratify`, each label is dealt round-robin separately, so
/// every part holds the same count of each label within one.
pub fn kfold_split(labels: &[u8], k: usize, seed: u64, stratify: bool) -> Result<Vec<Fold>> {
    if k < 3 {
        return Err(Error::Config(format!(
            "{k} folds leave no training data; need at least 3"
        )));
    }
    if labels.len() < k {
        return Err(Error::Config(format!(
            "cannot split {} subjects into {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = if stratify {
        let mut classes: Vec<u8> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        classes
            .iter()
            .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut parts = vec![Vec::new(); k];
    let mut next = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            parts[next].push(i);
            next = (next + 1) % k;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok((0..k)
        .map(|i| {
            let v = (i + 1) % k;
            let mut train: Vec<usize> = (0..k)
                .filter(|&j| j != i && j != v)
                .flat_map(|j| parts[j].iter().copied())
                .collect();
            train.sort_unstable();
            Fold {
                index: i,
                train,
                validation: parts[v].clone(),
                test: parts[i].clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_five() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = kfold_split(&labels, 5, 3, true).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.test.iter().filter(|&&i| labels[i] == 1).count(), 1);
            assert_eq!(f.train.len() + f.validation.len() + f.test.len(), 10);
            assert!(f.validation.iter().all(|i| !f.test.contains(i) && !f.train.contains(i)));
        }
        assert_eq!(folds, kfold_split(&labels, 5, 3, true).unwrap());
        assert_ne!(folds, kfold_split(&labels, 5, 4, true).unwrap());
    }

    #[test]
    fn too_few() {
        assert!(kfold_split(&[0, 1], 5, 0, true).is_err());
        assert!(kfold_split(&[0, 1, 0, 1], 2, 0, true).is_err());
    }
}
