//! Threshold-free detection metrics and rank aggregation across methods.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels (1 = anomalous).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::config(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::config(format!("label at position {i} is not 0 or 1")));
        }
        if let Some(i) = scores.iter().position(|s| s.is_nan()) {
            return Err(Error::config(format!("score at position {i} is NaN")));
        }
        Ok(LabeledScores { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos()
    }

    fn require_both(&self) -> Result<()> {
        if self.n_pos() == 0 || self.n_neg() == 0 {
            return Err(Error::config("both classes must be present"));
        }
        Ok(())
    }

    /// Indices grouped by equal score, in descending score order.
    fn tie_groups_desc(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if self.scores[g[0]] == self.scores[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        groups
    }
}

/// Probability that a random anomaly outscores a random normal sample, ties
/// counting one half. Computed from average ranks.
pub fn roc_auc(ls: &LabeledScores) -> Result<f64> {
    ls.require_both()?;
    let n = ls.scores.len();
    let mut rank_sum = 0.0;
    // Ascending rank of the lowest element in the current group.
    let mut below = n;
    for g in ls.tie_groups_desc() {
        below -= g.len();
        let avg = below as f64 + (g.len() as f64 + 1.0) / 2.0;
        rank_sum += avg * g.iter().filter(|&&i| ls.labels[i] == 1).count() as f64;
    }
    let (p, q) = (ls.n_pos() as f64, ls.n_neg() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Average precision: sum of precision times recall increment over the
/// descending-score thresholds, with tied scores forming one threshold.
pub fn pr_auc(ls: &LabeledScores) -> Result<f64> {
    ls.require_both()?;
    let n_pos = ls.n_pos() as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in ls.tie_groups_desc() {
        let hits = g.iter().filter(|&&i| ls.labels[i] == 1).count();
        tp += hits;
        seen += g.len();
        if hits > 0 {
            ap += (hits as f64 / n_pos) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub dataset: String,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub n_test: usize,
    pub n_anomaly: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn compute(method: &str, dataset: &str, ls: &LabeledScores, seed: u64) -> Result<Self> {
        Ok(MetricsReport {
            method: method.into(),
            dataset: dataset.into(),
            roc_auc: roc_auc(ls)?,
            pr_auc: pr_auc(ls)?,
            n_test: ls.scores.len(),
            n_anomaly: ls.n_pos(),
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Mean rank of each method over datasets; `table[m][d]` is method `m`'s metric
/// on dataset `d`, higher is better, and ties share their average rank.
pub fn average_rank(table: &[Vec<Option<f64>>]) -> Result<Vec<f64>> {
    let n_methods = table.len();
    if n_methods == 0 {
        return Err(Error::Empty("no methods".into()));
    }
    let n_data = table[0].len();
    if table.iter().any(|row| row.len() != n_data) {
        return Err(Error::config("every method needs one entry per dataset"));
    }
    if n_data == 0 {
        return Err(Error::Empty("no datasets".into()));
    }
    let mut totals = vec![0.0; n_methods];
    for d in 0..n_data {
        let col: Vec<f64> = table
            .iter()
            .enumerate()
            .map(|(m, row)| row[d].ok_or_else(|| Error::config(format!("missing value for method {m}, dataset {d}"))))
            .collect::<Result<_>>()?;
        for (m, &v) in col.iter().enumerate() {
            let better = col.iter().filter(|&&o| o > v).count() as f64;
            let tied = col.iter().filter(|&&o| o == v).count() as f64;
            totals[m] += better + (tied + 1.0) / 2.0;
        }
    }
    Ok(totals.into_iter().map(|t| t / n_data as f64).collect())
}

/// Per-method ranks on both metrics and their average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub method: String,
    pub roc_rank: f64,
    pub pr_rank: f64,
    pub overall_rank: f64,
}

pub fn rank_table(methods: &[String], roc: &[Vec<Option<f64>>], pr: &[Vec<Option<f64>>]) -> Result<Vec<RankRow>> {
    if methods.len() != roc.len() || methods.len() != pr.len() {
        return Err(Error::config("method names and metric tables disagree in length"));
    }
    let (r, p) = (average_rank(roc)?, average_rank(pr)?);
    Ok(methods
        .iter()
        .zip(r.iter().zip(&p))
        .map(|(m, (&r, &p))| RankRow {
            method: m.clone(),
            roc_rank: r,
            pr_rank: p,
            overall_rank: (r + p) / 2.0,
        })
        .collect())
}

pub fn write_rank_csv<W: Write>(rows: &[RankRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("rank table", e))?;
    Ok(())
}
