//! Non-parametric reconstruction estimator.
//!
//! The conditional of a masked coordinate is the kernel-weighted frequency of
//! its values among the reference rows, with weight `exp(-lambda * d_vis)`
//! where `d_vis` counts disagreements on the visible coordinates only.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{MaskedView, ProbeConfig};
use crate::rng::{self, Domain};
use crate::schema::{Code, EncodedDataset};
use crate::scorer::{score_sample, ReconstructionEstimator, ScoreReport};

/// Total kernel mass below which the estimate falls back to the marginal.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelOptions {
    pub lambda: f64,
    /// Cap on the number of reference rows; `None` keeps all normal rows.
    pub reference_subsample: Option<usize>,
    pub subsample_seed: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            lambda: 1.0,
            reference_subsample: None,
            subsample_seed: 0,
        }
    }
}

/// Disagreements between `view` and `row` over the visible coordinates.
pub fn visible_hamming(view: &MaskedView, row: &[Code]) -> usize {
    view.visible
        .iter()
        .filter(|&&r| view.codes[r] != row[r])
        .count()
}

pub fn kernel_weight(dist: usize, lambda: f64) -> f64 {
    (-lambda * dist as f64).exp()
}

#[derive(Clone, Debug)]
pub struct KernelReference {
    data: EncodedDataset,
    lambda: f64,
    /// `index[j][a]`: ascending ids of reference rows with `x_j = a`.
    index: Vec<Vec<Vec<u32>>>,
    /// Column-major copy of the rows, for vectorised distance passes.
    columns: Vec<Vec<Code>>,
}

/// Kernel weights of all reference rows for one view, stored relative to the
/// largest weight so that far-away views do not underflow.
#[derive(Clone, Debug)]
pub struct ViewWeights {
    relative: Vec<f64>,
    total_relative: f64,
    /// `ln` of the absolute total mass.
    log_mass: f64,
}

impl ViewWeights {
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    pub fn degenerate(&self) -> bool {
        self.log_mass < WEIGHT_FLOOR.ln()
    }
}

impl KernelReference {
    pub fn new(data: EncodedDataset, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("kernel bandwidth must be a positive real"));
        }
        if data.is_empty() {
            return Err(Error::Empty("kernel reference set is empty".into()));
        }
        let index = build_index(&data);
        let columns = (0..data.n_features())
            .map(|j| data.rows().map(|row| row[j]).collect())
            .collect();
        Ok(KernelReference {
            data,
            lambda,
            index,
            columns,
        })
    }

    /// Builds the reference from the normal rows of `data`, optionally subsampled.
    pub fn from_options(data: &EncodedDataset, opts: &KernelOptions) -> Result<Self> {
        let normal = data.normal_only();
        let data = match opts.reference_subsample {
            Some(cap) if cap < normal.n_rows() => {
                let mut rng = rng::stream(opts.subsample_seed, Domain::Subsample, &[]);
                let mut ids = index::sample(&mut rng, normal.n_rows(), cap).into_vec();
                ids.sort_unstable();
                normal.select(&ids)
            }
            _ => normal,
        };
        Self::new(data, opts.lambda)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn data(&self) -> &EncodedDataset {
        &self.data
    }

    pub fn value_index(&self) -> &[Vec<Vec<u32>>] {
        &self.index
    }

    /// True when the value index matches a fresh rebuild from the rows.
    pub fn index_is_consistent(&self) -> bool {
        self.index == build_index(&self.data)
    }

    pub fn weights(&self, view: &MaskedView) -> ViewWeights {
        let mut dists = vec![0u32; self.data.n_rows()];
        for &r in &view.visible {
            let c = view.codes[r];
            for (d, &v) in dists.iter_mut().zip(&self.columns[r]) {
                *d += u32::from(v != c);
            }
        }
        let dmin = dists.iter().copied().min().unwrap_or(0) as usize;
        let dmax = dists.iter().copied().max().unwrap_or(0) as usize;
        let table: Vec<f64> = (0..=dmax - dmin).map(|k| kernel_weight(k, self.lambda)).collect();
        let relative: Vec<f64> = dists.iter().map(|&d| table[d as usize - dmin]).collect();
        let total_relative: f64 = relative.iter().sum();
        ViewWeights {
            log_mass: -self.lambda * dmin as f64 + total_relative.ln(),
            relative,
            total_relative,
        }
    }

    /// Unsmoothed frequency of each value of coordinate `j` in the reference.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        let n = self.data.n_rows() as f64;
        self.index[j].iter().map(|ids| ids.len() as f64 / n).collect()
    }

    pub fn predict_with(&self, w: &ViewWeights, j: usize) -> Vec<f64> {
        if w.degenerate() {
            return self.marginal(j);
        }
        self.index[j]
            .iter()
            .map(|ids| ids.iter().map(|&n| w.relative[n as usize]).sum::<f64>() / w.total_relative)
            .collect()
    }

    fn check_target(&self, view: &MaskedView, j: usize) -> Result<()> {
        if j >= self.index.len() {
            return Err(Error::OutOfRange {
                index: j,
                len: self.index.len(),
            });
        }
        if !view.is_masked(j) {
            return Err(Error::config(format!("coordinate {j} is not masked in the view")));
        }
        Ok(())
    }
}

fn build_index(data: &EncodedDataset) -> Vec<Vec<Vec<u32>>> {
    let mut index: Vec<Vec<Vec<u32>>> = data
        .specs()
        .iter()
        .map(|s| vec![Vec::new(); s.cardinality as usize])
        .collect();
    for (n, row) in data.rows().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            index[j][c as usize].push(n as u32);
        }
    }
    index
}

/// Kernel-smoothed conditional distribution of coordinate `j` given `view`.
pub fn np_predict(reference: &KernelReference, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
    reference.check_target(view, j)?;
    Ok(reference.predict_with(&reference.weights(view), j))
}

impl ReconstructionEstimator for KernelReference {
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
        np_predict(self, view, j)
    }

    // One pass over the reference serves every masked coordinate of the view.
    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        if view.masked.is_empty() {
            return Ok(Vec::new());
        }
        let w = self.weights(view);
        view.masked
            .iter()
            .map(|&j| {
                self.check_target(view, j)?;
                Ok(self.predict_with(&w, j))
            })
            .collect()
    }
}

/// Non-parametric detector score over the probe grid.
pub fn np_score_sample(x: &[Code], sample_id: u64, cfg: &ProbeConfig, reference: &KernelReference) -> Result<ScoreReport> {
    score_sample(x, sample_id, cfg, reference)
}
