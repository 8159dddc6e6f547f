use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EncodedDataset;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            seed: 0,
            stratify: true,
        }
    }
}

/// Sorted row indices of a train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Training indices with label 0; anomalies in the training portion are dropped.
    pub fn normal_train(&self, labels: Option<&[u8]>) -> Vec<usize> {
        match labels {
            None => self.train.clone(),
            Some(l) => self.train.iter().copied().filter(|&i| l[i] == 0).collect(),
        }
    }
}

/// Random split with per-class train counts `round(fraction * n_class)`.
pub fn stratified_split(ds: &EncodedDataset, cfg: &SplitConfig) -> Result<Split> {
    split_labels(ds.n_rows(), ds.labels(), cfg)
}

/// Split of `n` rows, stratified on `labels` when configured.
pub fn split_labels(n: usize, labels: Option<&[u8]>, cfg: &SplitConfig) -> Result<Split> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train_fraction must lie in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    let groups: Vec<Vec<usize>> = match (cfg.stratify, labels) {
        (true, None) => return Err(Error::config("stratified split needs labels")),
        (true, Some(l)) => (0..2u8)
            .map(|y| (0..n).filter(|&i| l[i] == y).collect())
            .collect(),
        (false, _) => vec![(0..n).collect()],
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, mut idx) in groups.into_iter().enumerate() {
        let mut rng = rng::stream(cfg.seed, Domain::Split, &[g as u64]);
        idx.shuffle(&mut rng);
        let k = (cfg.train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(n: usize, anomalies: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < anomalies)).collect()
    }

    #[test]
    fn seventy_thirty_counts() {
        let l = labels(100, 10);
        let s = split_labels(100, Some(&l), &SplitConfig::default()).unwrap();
        assert_eq!(s.train.len(), 70);
        assert_eq!(s.test.len(), 30);
        assert_eq!(s.train.iter().filter(|&&i| l[i] == 1).count(), 7);
        assert_eq!(s.normal_train(Some(&l)).len(), 63);
    }

    #[test]
    fn fraction_must_be_open_interval() {
        for f in [0.0, 1.0, 1.5, -0.1] {
            let cfg = SplitConfig {
                train_fraction: f,
                ..SplitConfig::default()
            };
            assert!(split_labels(10, Some(&labels(10, 1)), &cfg).is_err());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let l = labels(57, 9);
        let cfg = SplitConfig {
            seed: 42,
            ..SplitConfig::default()
        };
        assert_eq!(split_labels(57, Some(&l), &cfg).unwrap(), split_labels(57, Some(&l), &cfg).unwrap());
    }

    #[test]
    fn empty_class_contributes_nothing() {
        let l = labels(20, 0);
        let s = split_labels(20, Some(&l), &SplitConfig::default()).unwrap();
        assert_eq!(s.train.len(), 14);
    }

    #[test]
    fn stratify_without_labels_fails() {
        assert!(split_labels(10, None, &SplitConfig::default()).is_err());
        let cfg = SplitConfig {
            stratify: false,
            ..SplitConfig::default()
        };
        assert_eq!(split_labels(10, None, &cfg).unwrap().train.len(), 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn per_class_proportions_within_one(
            l in proptest::collection::vec(0u8..2, 1..300),
            seed in any::<u64>(),
            frac in 0.05f64..0.95,
        ) {
            let cfg = SplitConfig { train_fraction: frac, seed, stratify: true };
            let s = split_labels(l.len(), Some(&l), &cfg).unwrap();
            let mut seen = vec![false; l.len()];
            for &i in s.train.iter().chain(&s.test) {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            prop_assert!(seen.iter().all(|&b| b));
            for y in 0..2u8 {
                let total = l.iter().filter(|&&v| v == y).count() as f64;
                let got = s.train.iter().filter(|&&i| l[i] == y).count() as f64;
                prop_assert!((got - frac * total).abs() <= 1.0);
            }
        }
    }
}
