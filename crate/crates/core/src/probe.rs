//! Forward absorbing-mask probes.
//!
//! At probe level `tau_l` each coordinate is independently replaced by [`MASK`]
//! with probability `1 - alpha(tau_l)`; visible coordinates keep their original
//! code. The randomness of view `(l, k)` of sample `i` is keyed on
//! `(base_seed, i, l, k)` only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::schema::{Code, MASK};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `alpha_t = 1 - t`.
    #[default]
    Linear,
}

impl Schedule {
    /// Probability that a coordinate is still unmasked at time `t`.
    pub fn alpha(self, t: f64) -> f64 {
        match self {
            Schedule::Linear => 1.0 - t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub levels: Vec<f64>,
    pub views_per_level: usize,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub base_seed: u64,
}

impl ProbeConfig {
    pub fn new(levels: Vec<f64>, views_per_level: usize, base_seed: u64) -> Result<Self> {
        let cfg = ProbeConfig {
            levels,
            views_per_level,
            schedule: Schedule::Linear,
            base_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid `{0.1, 0.2, ..., 0.9}` with 16 views per level.
    pub fn parametric_default() -> Self {
        ProbeConfig {
            levels: (1..=9).map(|i| i as f64 / 10.0).collect(),
            views_per_level: 16,
            schedule: Schedule::Linear,
            base_seed: 0,
        }
    }

    /// Grid `{0.15, 0.30, 0.45, 0.60}` with 8 views per level.
    pub fn nonparametric_default() -> Self {
        ProbeConfig {
            levels: vec![0.15, 0.30, 0.45, 0.60],
            views_per_level: 8,
            schedule: Schedule::Linear,
            base_seed: 0,
        }
    }

    /// `n` evenly spaced levels `l / (n + 1)`.
    pub fn uniform(n: usize, views_per_level: usize, base_seed: u64) -> Result<Self> {
        let levels = (1..=n).map(|l| l as f64 / (n + 1) as f64).collect();
        Self::new(levels, views_per_level, base_seed)
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("probe grid is empty"));
        }
        if self.views_per_level == 0 {
            return Err(Error::config("views_per_level must be positive"));
        }
        if self.levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::config("probe levels must lie in (0, 1)"));
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("probe levels must be strictly increasing"));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_cells(&self) -> usize {
        self.levels.len() * self.views_per_level
    }

    pub fn mask_probability(&self, level_index: usize) -> Result<f64> {
        let tau = self.levels.get(level_index).ok_or(Error::OutOfRange {
            index: level_index,
            len: self.levels.len(),
        })?;
        Ok(1.0 - self.schedule.alpha(*tau))
    }
}

/// A copy of a row with some coordinates replaced by [`MASK`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedView {
    pub codes: Vec<Code>,
    pub level_index: usize,
    pub view_index: usize,
    pub masked: Vec<usize>,
    pub visible: Vec<usize>,
}

impl MaskedView {
    /// Builds a view from a row and a per-coordinate mask flag.
    pub fn from_mask(x: &[Code], mask: &[bool], level_index: usize, view_index: usize) -> Self {
        let mut codes = x.to_vec();
        let mut masked = Vec::new();
        let mut visible = Vec::new();
        for (j, &m) in mask.iter().enumerate() {
            if m {
                codes[j] = MASK;
                masked.push(j);
            } else {
                visible.push(j);
            }
        }
        MaskedView {
            codes,
            level_index,
            view_index,
            masked,
            visible,
        }
    }

    pub fn is_masked(&self, j: usize) -> bool {
        self.codes[j] == MASK
    }

    /// Masks coordinate `j` in place (no-op if already masked).
    pub fn force_mask(&mut self, j: usize) {
        if self.codes[j] == MASK {
            return;
        }
        self.codes[j] = MASK;
        if let Ok(pos) = self.visible.binary_search(&j) {
            self.visible.remove(pos);
        }
        let pos = self.masked.binary_search(&j).unwrap_or_else(|p| p);
        self.masked.insert(pos, j);
    }
}

/// Draws the mask pattern of one view from its own stream.
pub fn draw_mask<R: Rng>(rng: &mut R, d: usize, p: f64) -> Vec<bool> {
    (0..d).map(|_| rng.random::<f64>() < p).collect()
}

pub fn sample_view(
    x: &[Code],
    cfg: &ProbeConfig,
    level_index: usize,
    view_index: usize,
    sample_id: u64,
) -> Result<MaskedView> {
    let p = cfg.mask_probability(level_index)?;
    let mut rng = rng::stream(
        cfg.base_seed,
        Domain::Probe,
        &[sample_id, level_index as u64, view_index as u64],
    );
    let mask = draw_mask(&mut rng, x.len(), p);
    Ok(MaskedView::from_mask(x, &mask, level_index, view_index))
}

/// All `L x K` views of a sample, grouped by level.
pub fn sample_all_views(x: &[Code], cfg: &ProbeConfig, sample_id: u64) -> Result<Vec<Vec<MaskedView>>> {
    cfg.validate()?;
    (0..cfg.n_levels())
        .map(|l| {
            (0..cfg.views_per_level)
                .map(|k| sample_view(x, cfg, l, k, sample_id))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(tau: f64, seed: u64) -> ProbeConfig {
        ProbeConfig::new(vec![tau], 1, seed).unwrap()
    }

    #[test]
    fn linear_mask_probability() {
        let cfg = ProbeConfig::new(vec![0.001, 0.3, 0.999], 1, 0).unwrap();
        assert!((cfg.mask_probability(1).unwrap() - 0.3).abs() < 1e-15);
        assert!(cfg.mask_probability(0).unwrap() < 0.0011);
        assert!(cfg.mask_probability(2).unwrap() > 0.9989);
        assert!(cfg.mask_probability(3).is_err());
        assert_eq!(Schedule::Linear.alpha(0.0), 1.0);
        assert_eq!(Schedule::Linear.alpha(1.0), 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(ProbeConfig::new(vec![0.2, 0.1], 1, 0).is_err());
        assert!(ProbeConfig::new(vec![0.0, 0.5], 1, 0).is_err());
        assert!(ProbeConfig::new(vec![0.5, 1.0], 1, 0).is_err());
        assert!(ProbeConfig::new(vec![0.5], 0, 0).is_err());
        assert!(ProbeConfig::new(vec![], 1, 0).is_err());
        ProbeConfig::parametric_default().validate().unwrap();
        ProbeConfig::nonparametric_default().validate().unwrap();
    }

    #[test]
    fn mean_mask_count_at_point_three() {
        let cfg = single(0.3, 11);
        let x = [1u32; 10];
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|i| sample_view(&x, &cfg, 0, 0, i).unwrap().masked.len())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - 3.0).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn near_zero_level_keeps_the_row() {
        let cfg = single(0.001, 5);
        let x = [0u32, 1, 2, 3, 4, 5, 6, 7, 8, 9];
        let draws = 10_000u64;
        let untouched = (0..draws)
            .filter(|&i| sample_view(&x, &cfg, 0, 0, i).unwrap().codes == x)
            .count();
        assert!(untouched as f64 / draws as f64 >= 0.985, "{untouched}");
    }

    #[test]
    fn deterministic_views() {
        let cfg = ProbeConfig::parametric_default().with_seed(99);
        let x = [3u32; 25];
        let a = sample_view(&x, &cfg, 4, 7, 123).unwrap();
        let b = sample_view(&x, &cfg, 4, 7, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_shapes() {
        let x = [0u32; 12];
        let views = sample_all_views(&x, &ProbeConfig::parametric_default(), 0).unwrap();
        assert_eq!(views.len(), 9);
        assert_eq!(views.iter().map(Vec::len).sum::<usize>(), 144);
        for (l, level) in views.iter().enumerate() {
            for (k, v) in level.iter().enumerate() {
                assert_eq!((v.level_index, v.view_index), (l, k));
            }
        }
        let one = sample_all_views(&x, &single(0.5, 0), 0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 1);
    }

    #[test]
    fn views_are_pairwise_independent() {
        // Co-mask rate of coordinate 0 across two views must match tau_a * tau_b.
        let cfg = ProbeConfig::new(vec![0.3, 0.6], 2, 3).unwrap();
        let x = [1u32; 4];
        let n = 20_000u64;
        let pairs = [((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 1))];
        for ((la, ka), (lb, kb)) in pairs {
            let both = (0..n)
                .filter(|&i| {
                    sample_view(&x, &cfg, la, ka, i).unwrap().is_masked(0)
                        && sample_view(&x, &cfg, lb, kb, i).unwrap().is_masked(0)
                })
                .count() as f64;
            let p = cfg.levels[la] * cfg.levels[lb];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((both / n as f64 - p).abs() < 3.0 * se, "pair {la}{ka}/{lb}{kb}");
        }
    }

    #[test]
    fn force_mask_keeps_sets_consistent() {
        let x = [5u32, 6, 7, 8];
        let mut v = MaskedView::from_mask(&x, &[false, true, false, false], 0, 0);
        v.force_mask(3);
        v.force_mask(1);
        assert_eq!(v.masked, vec![1, 3]);
        assert_eq!(v.visible, vec![0, 2]);
        assert_eq!(v.codes, vec![5, MASK, 7, MASK]);
    }

    proptest! {
        #[test]
        fn views_partition_and_preserve_visible(
            x in proptest::collection::vec(0u32..7, 1..40),
            tau in 0.01f64..0.99,
            seed in any::<u64>(),
            id in any::<u64>(),
        ) {
            let cfg = single(tau, seed);
            let v = sample_view(&x, &cfg, 0, 0, id).unwrap();
            let mut all: Vec<usize> = v.masked.iter().chain(&v.visible).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..x.len()).collect::<Vec<_>>());
            for &j in &v.masked {
                prop_assert_eq!(v.codes[j], MASK);
            }
            for &j in &v.visible {
                prop_assert_eq!(v.codes[j], x[j]);
            }
        }
    }
}
