//! Hamming k-nearest-neighbour baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Code, EncodedDataset};
use crate::scorer::ScoreReport;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnAggregate {
    /// Distance to the k-th nearest reference row.
    #[default]
    KthDistance,
    /// Mean distance to the k nearest reference rows.
    MeanOfK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    pub aggregate: KnnAggregate,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 25,
            aggregate: KnnAggregate::KthDistance,
        }
    }
}

pub fn hamming(a: &[Code], b: &[Code]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Anomaly score of `x` against normal `reference` rows.
pub fn knn_score(x: &[Code], reference: &EncodedDataset, cfg: &KnnConfig) -> Result<f64> {
    let n = reference.n_rows();
    if n == 0 {
        return Err(Error::Empty("kNN reference set".into()));
    }
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::config(format!("k = {} must lie in [1, {n}]", cfg.k)));
    }
    let d = reference.n_features();
    if x.len() != d {
        return Err(Error::config(format!("row has {} coordinates, reference has {d}", x.len())));
    }
    // Distances are integers in [0, d], so a histogram orders them exactly.
    let mut hist = vec![0usize; d + 1];
    for row in reference.rows() {
        hist[hamming(x, row)] += 1;
    }
    let (mut left, mut total) = (cfg.k, 0usize);
    for (dist, &c) in hist.iter().enumerate() {
        let take = c.min(left);
        total += take * dist;
        left -= take;
        if left == 0 {
            return Ok(match cfg.aggregate {
                KnnAggregate::KthDistance => dist as f64,
                KnnAggregate::MeanOfK => total as f64 / cfg.k as f64,
            });
        }
    }
    unreachable!("k <= n guarantees the histogram covers k rows")
}

/// Scores every row of `test`; reports carry a single cell holding the score.
pub fn knn_score_dataset(test: &EncodedDataset, reference: &EncodedDataset, cfg: &KnnConfig) -> Result<Vec<ScoreReport>> {
    (0..test.n_rows())
        .into_par_iter()
        .map(|i| Ok(ScoreReport::from_cells(i as u64, vec![vec![knn_score(test.row(i), reference, cfg)?]])))
        .collect()
}
