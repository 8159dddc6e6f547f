//! Synthetic binary data with a known generative law, its exact Bayesian
//! conditionals, oracle scores, and concentration bounds for the threshold
//! test.
//!
//! Nominal rows draw a latent bit `S ~ Bernoulli(0.5)` and copy it into every
//! coordinate, flipping each copy independently with probability `rho`.
//! Anomalous rows are identical except the target coordinate is additionally
//! flipped relative to `S`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{draw_mask, MaskedView, ProbeConfig};
use crate::rng::{self, Domain};
use crate::schema::{Code, EncodedDataset, FeatureSpec};
use crate::scorer::{pairwise_sum, score_sample, surprisal, surprisal_bound, view_score, ReconstructionEstimator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d: usize,
    pub flip_prob: f64,
    pub target: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d: 40,
            flip_prob: 0.08,
            target: 0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::config("synthetic data needs d >= 2"));
        }
        if !(self.flip_prob >= 0.0 && self.flip_prob < 0.5) {
            return Err(Error::config("flip probability must lie in [0, 0.5)"));
        }
        if self.target >= self.d {
            return Err(Error::OutOfRange {
                index: self.target,
                len: self.d,
            });
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn specs(&self) -> Vec<FeatureSpec> {
        (0..self.d).map(|j| FeatureSpec::plain(format!("x{j}"), 2)).collect()
    }
}

/// Which law rows are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Population {
    Nominal,
    Anomalous,
    /// Nominal with probability `r`, anomalous otherwise.
    Mixture(f64),
}

impl Population {
    fn nominal_prob(self) -> f64 {
        match self {
            Population::Nominal => 1.0,
            Population::Anomalous => 0.0,
            Population::Mixture(r) => r,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Population::Nominal => 0,
            Population::Anomalous => 1,
            Population::Mixture(r) => 2 ^ r.to_bits(),
        }
    }
}

/// Draws one row; returns it with its label (1 = anomalous).
pub fn draw_row<R: Rng>(spec: &SyntheticSpec, rng: &mut R, population: Population) -> (Vec<Code>, u8) {
    let nominal = rng.random::<f64>() < population.nominal_prob();
    let s: u32 = rng.random_bool(0.5).into();
    let mut x: Vec<Code> = (0..spec.d)
        .map(|_| if rng.random::<f64>() < spec.flip_prob { s ^ 1 } else { s })
        .collect();
    if !nominal {
        x[spec.target] ^= 1;
    }
    (x, u8::from(!nominal))
}

/// `n` labelled rows; row `i` depends only on `(spec.seed, population, i)`.
pub fn gen(spec: &SyntheticSpec, n: usize, population: Population) -> Result<EncodedDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&population.nominal_prob()) {
        return Err(Error::config("mixture weight must lie in [0, 1]"));
    }
    let mut codes = Vec::with_capacity(n * spec.d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(spec.seed, Domain::Synthetic, &[population.tag(), i as u64]);
        let (x, y) = draw_row(spec, &mut rng, population);
        codes.extend(x);
        labels.push(y);
    }
    EncodedDataset::new(spec.specs(), codes, Some(labels))
}

/// Nominal training rows plus a labelled test set of fresh nominal and
/// anomalous rows. The three parts draw from disjoint seeds derived from
/// `spec.seed`.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
}

pub fn benchmark(spec: &SyntheticSpec, n_train: usize, n_test_nominal: usize, n_test_anomalous: usize) -> Result<Benchmark> {
    let part = |k: u64| spec.clone().with_seed(rng::stream_id(Domain::Synthetic, &[spec.seed, k]));
    let train = gen(&part(0), n_train, Population::Nominal)?;
    let nominal = gen(&part(1), n_test_nominal, Population::Nominal)?;
    let anomalous = gen(&part(2), n_test_anomalous, Population::Anomalous)?;
    let mut codes = nominal.codes().to_vec();
    codes.extend_from_slice(anomalous.codes());
    let mut labels = nominal.labels().unwrap_or_default().to_vec();
    labels.extend_from_slice(anomalous.labels().unwrap_or_default());
    let test = EncodedDataset::new(spec.specs(), codes, Some(labels))?;
    Ok(Benchmark { train, test })
}

/// Posterior `P(S = 1 | visible)` under the nominal law.
fn posterior_one(spec: &SyntheticSpec, view: &MaskedView) -> f64 {
    let ones = view.visible.iter().filter(|&&r| view.codes[r] == 1).count() as f64;
    let zeros = view.visible.len() as f64 - ones;
    if spec.flip_prob == 0.0 {
        // Noiseless: any visible coordinate reveals S; contradictory evidence stays neutral.
        return match (ones > 0.0, zeros > 0.0) {
            (true, false) => 1.0,
            (false, true) => 0.0,
            _ => 0.5,
        };
    }
    // log P(visible | S = 1) - log P(visible | S = 0)
    let log_ratio = (ones - zeros) * ((1.0 - spec.flip_prob).ln() - spec.flip_prob.ln());
    1.0 / (1.0 + (-log_ratio).exp())
}

fn predictive(spec: &SyntheticSpec, p1: f64) -> Vec<f64> {
    let rho = spec.flip_prob;
    let one = p1 * (1.0 - rho) + (1.0 - p1) * rho;
    vec![1.0 - one, one]
}

/// Exact nominal conditional of a masked coordinate given the visible ones.
pub fn oracle_predict(spec: &SyntheticSpec, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
    if view.codes.len() != spec.d {
        return Err(Error::config(format!("view has {} coordinates, expected {}", view.codes.len(), spec.d)));
    }
    if !view.is_masked(j) {
        return Err(Error::config(format!("coordinate {j} is not masked in this view")));
    }
    Ok(predictive(spec, posterior_one(spec, view)))
}

/// The nominal-law oracle as a reconstruction estimator.
#[derive(Clone, Debug)]
pub struct OracleEstimator {
    pub spec: SyntheticSpec,
}

impl ReconstructionEstimator for OracleEstimator {
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
        oracle_predict(&self.spec, view, j)
    }

    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        // Every masked coordinate shares the same conditional.
        let p = predictive(&self.spec, posterior_one(&self.spec, view));
        Ok(vec![p; view.masked.len()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        let var = if xs.len() > 1 {
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
            pairwise_sum(&sq) / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Monte-Carlo oracle score, the score of a supplied estimator on the same
/// views, and their difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleScores {
    pub oracle: Estimate,
    pub estimator: Estimate,
    pub delta_kl: Estimate,
}

/// Estimates the expected reconstruction score of `x` over fresh probe views,
/// using common views for the oracle and `est`.
pub fn oracle_scores<E: ReconstructionEstimator + ?Sized>(
    spec: &SyntheticSpec,
    x: &[Code],
    sample_id: u64,
    probe: &ProbeConfig,
    n_mc: usize,
    est: &E,
) -> Result<OracleScores> {
    spec.validate()?;
    probe.validate()?;
    if n_mc == 0 {
        return Err(Error::config("n_mc must be at least 1"));
    }
    let oracle = OracleEstimator { spec: spec.clone() };
    let draws: Vec<(f64, f64)> = (0..n_mc)
        .into_par_iter()
        .map(|m| {
            let mut so = Vec::with_capacity(probe.n_levels());
            let mut se = Vec::with_capacity(probe.n_levels());
            for l in 0..probe.n_levels() {
                let p = probe.mask_probability(l)?;
                let mut rng = rng::stream(probe.base_seed, Domain::MonteCarlo, &[sample_id, m as u64, l as u64]);
                let view = MaskedView::from_mask(x, &draw_mask(&mut rng, x.len(), p), l, m);
                so.push(view_score(x, &view, &oracle)?);
                se.push(view_score(x, &view, est)?);
            }
            let n = probe.n_levels() as f64;
            Ok((pairwise_sum(&so) / n, pairwise_sum(&se) / n))
        })
        .collect::<Result<_>>()?;
    let o: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let e: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let diff: Vec<f64> = draws.iter().map(|d| d.1 - d.0).collect();
    Ok(OracleScores {
        oracle: Estimate::from_samples(&o),
        estimator: Estimate::from_samples(&e),
        delta_kl: Estimate::from_samples(&diff),
    })
}

/// Constants of the fixed-threshold error bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub levels: usize,
    pub views: usize,
    pub gamma: f64,
    /// Upper bound on a single surprisal.
    pub c: f64,
    /// Estimation error of the reconstruction model.
    pub eps: f64,
    pub mu0: f64,
    pub mu1: f64,
}

impl BoundInputs {
    pub fn new(probe: &ProbeConfig, gamma: f64, mu0: f64, mu1: f64) -> Self {
        BoundInputs {
            levels: probe.n_levels(),
            views: probe.views_per_level,
            gamma,
            c: surprisal_bound(),
            eps: 0.0,
            mu0,
            mu1,
        }
    }

    fn m(&self) -> f64 {
        self.levels.min(self.views) as f64
    }
}

/// False-alarm bound on nominal data; 1 when the gap is not positive.
pub fn type1_bound(b: &BoundInputs) -> f64 {
    let gap = b.gamma - b.mu0 - b.eps;
    if !(gap > 0.0) || !(b.c > 0.0) {
        return 1.0;
    }
    (3.0 * (-b.m() * gap * gap / (18.0 * b.c * b.c)).exp()).min(1.0)
}

/// Missed-detection bound on anomalous data; only defined for an exact model.
pub fn type2_bound(b: &BoundInputs) -> f64 {
    let gap = b.mu1 - b.gamma;
    if !(gap > 0.0) || b.eps != 0.0 || !(b.c > 0.0) {
        return 1.0;
    }
    (2.0 * (-b.m() * gap * gap / (2.0 * b.c * b.c)).exp()).min(1.0)
}

/// Population means of the oracle score under the nominal and anomalous laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationMeans {
    pub mu0: Estimate,
    pub mu1: Estimate,
}

/// Estimates both population means from `n_views` (row, level, view) draws each.
pub fn population_means(spec: &SyntheticSpec, probe: &ProbeConfig, n_views: usize) -> Result<PopulationMeans> {
    spec.validate()?;
    probe.validate()?;
    let oracle = OracleEstimator { spec: spec.clone() };
    let est = |population: Population, tag: u64| -> Result<Estimate> {
        let vals: Vec<f64> = (0..n_views)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(spec.seed, Domain::MonteCarlo, &[tag, i as u64]);
                let (x, _) = draw_row(spec, &mut rng, population);
                // Levels are stratified so each contributes equally.
                let l = i % probe.n_levels();
                let mask = draw_mask(&mut rng, spec.d, probe.mask_probability(l)?);
                view_score(&x, &MaskedView::from_mask(&x, &mask, l, 0), &oracle)
            })
            .collect::<Result<_>>()?;
        Ok(Estimate::from_samples(&vals))
    };
    Ok(PopulationMeans {
        mu0: est(Population::Nominal, u64::MAX - 1)?,
        mu1: est(Population::Anomalous, u64::MAX - 2)?,
    })
}

/// `n` thresholds spread evenly from below `mu0` to above `mu1`.
pub fn gamma_grid(mu0: f64, mu1: f64, n: usize) -> Vec<f64> {
    let span = (mu1 - mu0).abs().max(1e-3);
    let (lo, hi) = (mu0.min(mu1) - 0.5 * span, mu0.max(mu1) + 0.5 * span);
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub gamma: f64,
    pub type1_empirical: f64,
    pub type1_bound: f64,
    pub type2_empirical: f64,
    pub type2_bound: f64,
    pub type1_vacuous: bool,
    pub type2_vacuous: bool,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub levels: usize,
    pub views: usize,
    pub n_trials: usize,
    pub c: f64,
    pub means: PopulationMeans,
    pub rows: Vec<BoundRow>,
}

impl BoundsReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "gamma",
            "type1_empirical",
            "type1_bound",
            "type2_empirical",
            "type2_bound",
            "type1_vacuous",
            "type2_vacuous",
            "violation",
        ])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.gamma),
                format!("{:e}", r.type1_empirical),
                format!("{:e}", r.type1_bound),
                format!("{:e}", r.type2_empirical),
                format!("{:e}", r.type2_bound),
                r.type1_vacuous.to_string(),
                r.type2_vacuous.to_string(),
                r.violation.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("bounds table", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        save_with(path, |w| self.write_csv(w))
    }
}

fn save_with(path: impl AsRef<Path>, f: impl FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f(std::io::BufWriter::new(file))
}

/// Empirical Type-I/Type-II error of the oracle-scored threshold test against
/// the bounds, over fresh nominal and anomalous rows.
///
/// A row is a violation when an empirical rate exceeds its bound by more than
/// three binomial standard errors evaluated at the bound.
pub fn validate_bounds(
    spec: &SyntheticSpec,
    probe: &ProbeConfig,
    gammas: &[f64],
    n_trials: usize,
    means: &PopulationMeans,
    c: Option<f64>,
) -> Result<BoundsReport> {
    spec.validate()?;
    probe.validate()?;
    if n_trials == 0 {
        return Err(Error::config("n_trials must be at least 1"));
    }
    let oracle = OracleEstimator { spec: spec.clone() };
    let scores = |population: Population, offset: u64| -> Result<Vec<f64>> {
        let data = gen(spec, n_trials, population)?;
        (0..n_trials)
            .into_par_iter()
            .map(|i| Ok(score_sample(data.row(i), offset + i as u64, probe, &oracle)?.score))
            .collect()
    };
    let s0 = scores(Population::Nominal, 0)?;
    let s1 = scores(Population::Anomalous, n_trials as u64)?;
    let n = n_trials as f64;
    let slack = |b: f64| 3.0 * (b * (1.0 - b) / n).sqrt();
    let c = c.unwrap_or_else(surprisal_bound);
    let rows = gammas
        .iter()
        .map(|&gamma| {
            let b = BoundInputs {
                c,
                ..BoundInputs::new(probe, gamma, means.mu0.mean, means.mu1.mean)
            };
            let t1 = s0.iter().filter(|&&s| s > gamma).count() as f64 / n;
            let t2 = s1.iter().filter(|&&s| s <= gamma).count() as f64 / n;
            let (b1, b2) = (type1_bound(&b), type2_bound(&b));
            BoundRow {
                gamma,
                type1_empirical: t1,
                type1_bound: b1,
                type2_empirical: t2,
                type2_bound: b2,
                type1_vacuous: b1 >= 1.0,
                type2_vacuous: b2 >= 1.0,
                violation: t1 > b1 + slack(b1) || t2 > b2 + slack(b2),
            }
        })
        .collect();
    Ok(BoundsReport {
        levels: probe.n_levels(),
        views: probe.views_per_level,
        n_trials,
        c,
        means: *means,
        rows,
    })
}

/// Mean surprisal of the target coordinate, forced masked, per (r, tau) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub r: Vec<f64>,
    pub tau: Vec<f64>,
    /// Indexed `[r][tau]`.
    pub cells: Vec<Vec<Estimate>>,
}

impl Heatmap {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "tau", "mean", "se"])?;
        for (r, row) in self.r.iter().zip(&self.cells) {
            for (t, c) in self.tau.iter().zip(row) {
                w.write_record([r.to_string(), t.to_string(), format!("{:e}", c.mean), format!("{:e}", c.se)])?;
            }
        }
        w.flush().map_err(|e| Error::io("heatmap", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        save_with(path, |w| self.write_csv(w))
    }
}

/// The default mixture grid `{0, 0.1, ..., 1}`.
pub fn default_r_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Heatmap of `est` over mixture weights and mask rates. Cell `(i, t)` uses
/// draws keyed by `(seed, i, t, m)`, so two estimators given the same seed see
/// the same rows and views.
pub fn heatmap<E: ReconstructionEstimator + ?Sized>(
    spec: &SyntheticSpec,
    est: &E,
    r_grid: &[f64],
    tau_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<Heatmap> {
    spec.validate()?;
    if n_mc == 0 {
        return Err(Error::config("n_mc must be at least 1"));
    }
    if let Some(&t) = tau_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::config(format!("mask rate {t} outside (0, 1)")));
    }
    if let Some(&r) = r_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::config(format!("mixture weight {r} outside [0, 1]")));
    }
    let j = spec.target;
    let mut cells = Vec::with_capacity(r_grid.len());
    for (i, &r) in r_grid.iter().enumerate() {
        let mut row = Vec::with_capacity(tau_grid.len());
        for (t, &tau) in tau_grid.iter().enumerate() {
            let vals: Vec<f64> = (0..n_mc)
                .into_par_iter()
                .map(|m| {
                    let mut rng = rng::stream(seed, Domain::MonteCarlo, &[i as u64, t as u64, m as u64, 0x4d]);
                    let (x, _) = draw_row(spec, &mut rng, Population::Mixture(r));
                    let mut view = MaskedView::from_mask(&x, &draw_mask(&mut rng, spec.d, tau), 0, m);
                    view.force_mask(j);
                    let p = est.predict(&view, j)?;
                    Ok(surprisal(p[x[j] as usize]))
                })
                .collect::<Result<_>>()?;
            row.push(Estimate::from_samples(&vals));
        }
        cells.push(row);
    }
    Ok(Heatmap {
        r: r_grid.to_vec(),
        tau: tau_grid.to_vec(),
        cells,
    })
}
