//! Trainable reconstruction network.
//!
//! Per-feature embeddings (with a dedicated MASK row) and an optional level
//! embedding are concatenated and fed through `n_layers` affine + activation +
//! dropout blocks, then fanned out to one softmax head per feature. Training
//! minimises the view-normalised masked reconstruction loss at the probe
//! levels used for scoring.

mod checkpoint;
mod gradcheck;
mod net;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{MaskedView, ProbeConfig};
use crate::schema::{Code, EncodedDataset, FeatureSpec};
use crate::scorer::{score_sample, ReconstructionEstimator, ScoreReport};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::grad_check;
pub use net::{masked_loss, pm_score_sample, DropoutKey, ParamBlock, ReconNet, Scalar, TrainItem};
pub use optim::AdamW;
pub use train::{epoch_items, train, train_with, EpochLoss, LossTrace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// Arithmetic of the network. Losses and probabilities are always f64.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelConditioning {
    #[default]
    Embedding,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub level_conditioning: LevelConditioning,
    pub activation: Activation,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 256,
            hidden_dim: 512,
            n_layers: 3,
            dropout: 0.1,
            level_conditioning: LevelConditioning::Embedding,
            activation: Activation::Relu,
            precision: Precision::F32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.n_layers == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::config("learning rate and weight decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config("invalid AdamW moment parameters"));
        }
        Ok(())
    }
}

/// A network of either precision, chosen at run time from its config.
#[derive(Clone, Debug)]
pub enum Model {
    F32(ReconNet<f32>),
    F64(ReconNet<f64>),
}

macro_rules! each {
    ($m:expr, $n:ident => $e:expr) => {
        match $m {
            Model::F32($n) => $e,
            Model::F64($n) => $e,
        }
    };
}

impl From<ReconNet<f32>> for Model {
    fn from(n: ReconNet<f32>) -> Self {
        Model::F32(n)
    }
}

impl From<ReconNet<f64>> for Model {
    fn from(n: ReconNet<f64>) -> Self {
        Model::F64(n)
    }
}

impl Model {
    pub fn new(config: ModelConfig, cardinalities: &[u32], n_levels: usize) -> Result<Self> {
        Ok(match config.precision {
            Precision::F32 => ReconNet::<f32>::new(config, cardinalities, n_levels)?.into(),
            Precision::F64 => ReconNet::<f64>::new(config, cardinalities, n_levels)?.into(),
        })
    }

    /// Rebuilds a network from f64 parameters, rounding to the configured precision.
    pub fn from_f64_params(config: ModelConfig, cardinalities: &[u32], n_levels: usize, params: Vec<f64>) -> Result<Self> {
        Ok(match config.precision {
            Precision::F32 => {
                let p = params.into_iter().map(|v| v as f32).collect();
                ReconNet::<f32>::from_params(config, cardinalities, n_levels, p)?.into()
            }
            Precision::F64 => ReconNet::<f64>::from_params(config, cardinalities, n_levels, params)?.into(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        each!(self, n => n.config())
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        each!(self, n => n.cardinalities())
    }

    pub fn n_levels(&self) -> usize {
        each!(self, n => n.n_levels())
    }

    pub fn n_params(&self) -> usize {
        each!(self, n => n.n_params())
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        each!(self, n => n.blocks())
    }

    pub fn params_f64(&self) -> Vec<f64> {
        match self {
            Model::F32(n) => n.params().iter().map(|&v| v as f64).collect(),
            Model::F64(n) => n.params().to_vec(),
        }
    }

    pub fn validate_cardinalities(&self, specs: &[FeatureSpec]) -> Result<()> {
        each!(self, n => n.validate_cardinalities(specs))
    }

    pub fn check_probe(&self, probe: &ProbeConfig) -> Result<()> {
        each!(self, n => n.check_probe(probe))
    }

    pub fn train(
        self,
        data: &EncodedDataset,
        probe: &ProbeConfig,
        cfg: &TrainConfig,
        on_epoch: impl FnMut(&EpochLoss),
    ) -> Result<(Self, LossTrace)> {
        Ok(match self {
            Model::F32(n) => {
                let (n, t) = train_with(n, data, probe, cfg, on_epoch)?;
                (n.into(), t)
            }
            Model::F64(n) => {
                let (n, t) = train_with(n, data, probe, cfg, on_epoch)?;
                (n.into(), t)
            }
        })
    }

    pub fn score_sample(&self, x: &[Code], sample_id: u64, probe: &ProbeConfig) -> Result<ScoreReport> {
        self.check_probe(probe)?;
        score_sample(x, sample_id, probe, self)
    }

    pub fn masked_loss(&self, items: &[TrainItem<'_>]) -> Result<f64> {
        each!(self, n => masked_loss(n, items))
    }
}

impl ReconstructionEstimator for Model {
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
        each!(self, n => n.predict(view, j))
    }

    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        each!(self, n => n.predict_masked(view))
    }

    fn predict_views(&self, views: &[&MaskedView]) -> Result<Vec<Vec<Vec<f64>>>> {
        each!(self, n => n.predict_views(views))
    }
}
