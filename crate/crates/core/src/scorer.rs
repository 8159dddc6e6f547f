//! Reconstruction-surprisal scoring shared by every estimator.
//!
//! A view's score is the mean surprisal `-log p(x_j | view)` over its masked
//! coordinates (0 for a view with nothing masked); a sample's score is the
//! mean over all `L x K` probe views.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{sample_all_views, MaskedView, ProbeConfig};
use crate::schema::{Code, EncodedDataset};

/// Probability floor applied before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a predicted distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Upper bound on any single surprisal, `-ln PROB_FLOOR`.
pub fn surprisal_bound() -> f64 {
    -PROB_FLOOR.ln()
}

#[inline]
pub fn surprisal(p: f64) -> f64 {
    -p.clamp(PROB_FLOOR, 1.0).ln()
}

/// Conditional model of a masked coordinate given the visible context.
///
/// Implementations must be safe to call concurrently through `&self`.
pub trait ReconstructionEstimator: Sync {
    /// Distribution over the states of coordinate `j`, which must be masked in `view`.
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>>;

    /// Distributions for every masked coordinate of `view`, in `view.masked` order.
    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        view.masked.iter().map(|&j| self.predict(view, j)).collect()
    }

    /// Batched form of [`predict_masked`](Self::predict_masked).
    fn predict_views(&self, views: &[&MaskedView]) -> Result<Vec<Vec<Vec<f64>>>> {
        views.iter().map(|v| self.predict_masked(v)).collect()
    }

    fn is_trained(&self) -> bool {
        true
    }
}

impl<E: ReconstructionEstimator + ?Sized> ReconstructionEstimator for &E {
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
        (**self).predict(view, j)
    }
    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        (**self).predict_masked(view)
    }
    fn predict_views(&self, views: &[&MaskedView]) -> Result<Vec<Vec<Vec<f64>>>> {
        (**self).predict_views(views)
    }
    fn is_trained(&self) -> bool {
        (**self).is_trained()
    }
}

pub fn check_distribution(probs: &[f64], coord: usize) -> Result<()> {
    let bad = |reason: String| Error::MalformedDistribution { coord, reason };
    if probs.is_empty() {
        return Err(bad("empty distribution".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(bad(format!("entry {p} is not a nonnegative finite number")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(bad(format!("mass {total} differs from 1")));
    }
    Ok(())
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// View score from already-predicted distributions (one per masked coordinate).
pub fn view_score_from(x: &[Code], view: &MaskedView, probs: &[Vec<f64>]) -> Result<f64> {
    if probs.len() != view.masked.len() {
        return Err(Error::config("prediction count differs from masked set size"));
    }
    let mut terms = Vec::with_capacity(view.masked.len());
    for (&j, p) in view.masked.iter().zip(probs) {
        check_distribution(p, j)?;
        let truth = x[j] as usize;
        let pj = *p.get(truth).ok_or_else(|| Error::MalformedDistribution {
            coord: j,
            reason: format!("true code {truth} outside a distribution of length {}", p.len()),
        })?;
        terms.push(surprisal(pj));
    }
    Ok(pairwise_sum(&terms) / view.masked.len().max(1) as f64)
}

/// Mean surprisal of the true values at the masked positions of `view`.
pub fn view_score<E: ReconstructionEstimator + ?Sized>(x: &[Code], view: &MaskedView, est: &E) -> Result<f64> {
    if view.masked.is_empty() {
        return Ok(0.0);
    }
    let probs = est.predict_masked(view)?;
    view_score_from(x, view, &probs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub sample_id: u64,
    pub score: f64,
    /// Per-view scores, indexed `[level][view]`.
    pub per_cell: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<u8>,
}

impl ScoreReport {
    pub fn from_cells(sample_id: u64, per_cell: Vec<Vec<f64>>) -> Self {
        let flat: Vec<f64> = per_cell.iter().flatten().copied().collect();
        let score = pairwise_sum(&flat) / flat.len().max(1) as f64;
        ScoreReport {
            sample_id,
            score,
            per_cell,
            decision: None,
        }
    }

    pub fn with_threshold(mut self, gamma: f64) -> Self {
        self.decision = Some(decide(&self, gamma));
        self
    }
}

/// Aggregated score of one sample over the full probe grid.
pub fn score_sample<E: ReconstructionEstimator + ?Sized>(
    x: &[Code],
    sample_id: u64,
    cfg: &ProbeConfig,
    est: &E,
) -> Result<ScoreReport> {
    if !est.is_trained() {
        return Err(Error::config("estimator has not been trained"));
    }
    let views = sample_all_views(x, cfg, sample_id)?;
    let flat: Vec<&MaskedView> = views.iter().flatten().collect();
    let probs = est.predict_views(&flat)?;
    let mut per_cell = vec![Vec::with_capacity(cfg.views_per_level); cfg.n_levels()];
    for (view, p) in flat.iter().zip(&probs) {
        let s = view_score_from(x, view, p).map_err(|e| Error::AtView {
            level: view.level_index,
            view: view.view_index,
            source: Box::new(e),
        })?;
        per_cell[view.level_index].push(s);
    }
    Ok(ScoreReport::from_cells(sample_id, per_cell))
}

/// Scores every row; row `i` uses sample id `i`. Runs on the current rayon pool.
pub fn score_dataset<E: ReconstructionEstimator + ?Sized>(
    ds: &EncodedDataset,
    cfg: &ProbeConfig,
    est: &E,
) -> Result<Vec<ScoreReport>> {
    (0..ds.n_rows())
        .into_par_iter()
        .map(|i| score_sample(ds.row(i), i as u64, cfg, est))
        .collect()
}

/// 1 iff the score strictly exceeds `gamma`.
pub fn decide(report: &ScoreReport, gamma: f64) -> u8 {
    u8::from(report.score > gamma)
}

/// Smallest score `g` with at least a `1 - alpha` fraction of `scores` at or below it.
pub fn calibrate_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("no calibration scores".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("significance level must lie in (0, 1)"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard the ceiling against representation error in (1 - alpha) * n.
    let need = (((1.0 - alpha) * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[need.min(n) - 1])
}

/// Writes `sample_id,score,decision`; `decision` is empty without a threshold.
pub fn write_scores_csv<W: Write>(reports: &[ScoreReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_id", "score", "decision"])?;
    for r in reports {
        let decision = r.decision.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([r.sample_id.to_string(), r.score.to_string(), decision])?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

/// Reads `(sample_id, score)` pairs back from a score CSV.
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<(u64, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("score file lacks a `{name}` column")))
    };
    let (id_col, score_col) = (col("sample_id")?, col("score")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let id = rec[id_col]
            .parse()
            .map_err(|_| Error::config(format!("row {}: bad sample_id", i + 1)))?;
        let s = rec[score_col]
            .parse()
            .map_err(|_| Error::config(format!("row {}: bad score", i + 1)))?;
        out.push((id, s));
    }
    Ok(out)
}
