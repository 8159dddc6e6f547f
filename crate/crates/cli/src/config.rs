//! Run configuration. Every field has a default, so `{"schema_version": 1}`
//! runs the fixed-hyperparameter protocol. One top-level seed drives every
//! randomised component; per-section seed fields are overwritten by it.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use maskdiff_core::kernel::KernelOptions;
use maskdiff_core::knn::KnnConfig;
use maskdiff_core::model::{ModelConfig, TrainConfig};
use maskdiff_core::probe::ProbeConfig;
use maskdiff_core::rng::{self, Domain};
use maskdiff_core::schema::{ColumnKind, FitOptions, SplitConfig};
use maskdiff_core::synthetic::{default_r_grid, SyntheticSpec};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub data: DataConfig,
    pub encoding: FitOptions,
    pub split: SplitConfig,
    #[serde(default = "ProbeConfig::parametric_default")]
    pub parametric_probe: ProbeConfig,
    #[serde(default = "ProbeConfig::nonparametric_default")]
    pub kernel_probe: ProbeConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub kernel: KernelOptions,
    pub knn: KnnConfig,
    pub score: ScoreConfig,
    pub synthetic: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            data: DataConfig::default(),
            encoding: FitOptions {
                labels_column: Some("label".into()),
                ..FitOptions::default()
            },
            split: SplitConfig::default(),
            parametric_probe: ProbeConfig::parametric_default(),
            kernel_probe: ProbeConfig::nonparametric_default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            kernel: KernelOptions::default(),
            knn: KnnConfig::default(),
            score: ScoreConfig::default(),
            synthetic: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Forces a column's kind instead of inferring it.
    pub column_kinds: HashMap<String, ColumnKind>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Fixed decision threshold written next to each score.
    pub threshold: Option<f64>,
    /// Calibrate the threshold at this false-alarm rate on the reference rows.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: SyntheticSpec,
    pub n_train: usize,
    pub n_test_nominal: usize,
    pub n_test_anomalous: usize,
    pub r_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub n_mc: usize,
    /// Each entry `n` runs the bound check with `L = K = n`.
    pub bound_sizes: Vec<usize>,
    pub n_gamma: usize,
    pub n_trials: usize,
    pub n_mean_views: usize,
    /// Per-view score bound; `None` uses the surprisal cap.
    pub c: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            spec: SyntheticSpec::default(),
            n_train: 4000,
            n_test_nominal: 1000,
            n_test_anomalous: 1000,
            r_grid: default_r_grid(),
            tau_grid: vec![0.15, 0.30, 0.45, 0.60],
            n_mc: 2000,
            bound_sizes: vec![4, 8, 16],
            n_gamma: 10,
            n_trials: 2000,
            n_mean_views: 100_000,
            c: None,
        }
    }
}

/// Component seeds derived from the run seed.
fn derive(seed: u64, k: u64) -> u64 {
    rng::stream_id(Domain::Split, &[seed, k])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies the seed override, propagates seeds and validates everything.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        let s = self.seed;
        self.split.seed = derive(s, 0);
        self.parametric_probe.base_seed = derive(s, 1);
        self.kernel_probe.base_seed = derive(s, 2);
        self.model.seed = derive(s, 3);
        self.train.seed = derive(s, 4);
        self.kernel.subsample_seed = derive(s, 5);
        self.synthetic.spec.seed = derive(s, 6);

        self.parametric_probe.validate().context("parametric_probe")?;
        self.kernel_probe.validate().context("kernel_probe")?;
        self.model.validate().context("model")?;
        self.train.validate().context("train")?;
        self.synthetic.spec.validate().context("synthetic.spec")?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            bail!("split.train_fraction must lie in (0, 1)");
        }
        if !(self.kernel.lambda > 0.0 && self.kernel.lambda.is_finite()) {
            bail!("kernel.lambda must be positive and finite");
        }
        if self.knn.k == 0 {
            bail!("knn.k must be positive");
        }
        if self.encoding.n_bins == 0 {
            bail!("encoding.n_bins must be positive");
        }
        if let Some(a) = self.score.alpha {
            if !(a > 0.0 && a < 1.0) {
                bail!("score.alpha must lie in (0, 1)");
            }
            if self.score.threshold.is_some() {
                bail!("score.threshold and score.alpha are mutually exclusive");
            }
        }
        let sy = &self.synthetic;
        if sy.n_train == 0 || sy.n_test_nominal == 0 || sy.n_test_anomalous == 0 {
            bail!("synthetic sample counts must be positive");
        }
        if sy.n_mc == 0 || sy.n_trials == 0 || sy.n_mean_views == 0 || sy.n_gamma == 0 {
            bail!("synthetic Monte-Carlo counts must be positive");
        }
        if sy.bound_sizes.contains(&0) {
            bail!("synthetic.bound_sizes entries must be positive");
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves() {
        let cfg: RunConfig = serde_json::from_str(r#"{"schema_version": 1}"#).unwrap();
        let cfg = cfg.resolve(None).unwrap();
        assert_eq!(cfg.parametric_probe.levels.len(), 9);
        assert_eq!(cfg.kernel_probe.views_per_level, 8);
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.encoding.labels_column.as_deref(), Some("label"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"schema_version": 1, "sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"model": {"hiden_dim": 3}}"#).is_err());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let cfg = RunConfig {
            schema_version: 7,
            ..RunConfig::default()
        };
        assert!(cfg.resolve(None).is_err());
    }

    #[test]
    fn seed_override_reaches_components() {
        let a = RunConfig::default().resolve(Some(1)).unwrap();
        let b = RunConfig::default().resolve(Some(2)).unwrap();
        assert_eq!(a.seed, 1);
        assert_ne!(a.model.seed, b.model.seed);
        assert_ne!(a.train.seed, a.model.seed);
        assert_ne!(a.parametric_probe.base_seed, b.parametric_probe.base_seed);
    }

    #[test]
    fn invalid_sections_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.kernel.lambda = 0.0;
        assert!(cfg.resolve(None).is_err());
        let mut cfg = RunConfig::default();
        cfg.score.alpha = Some(1.5);
        assert!(cfg.resolve(None).is_err());
    }
}
