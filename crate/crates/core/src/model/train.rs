use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{masked_loss, DropoutKey, ReconNet, Scalar, TrainItem};
use super::optim::AdamW;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::probe::{draw_mask, MaskedView, ProbeConfig};
use crate::rng::{self, Domain};
use crate::schema::EncodedDataset;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: usize,
}

/// Loss before training plus the mean minibatch loss of every epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub initial: f64,
    pub epochs: Vec<EpochLoss>,
}

impl LossTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    /// One row per epoch; epoch 0 is the pre-training loss.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "mean_loss", "steps"])?;
        w.write_record(["0".to_string(), format!("{:e}", self.initial), "0".to_string()])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format!("{:e}", e.mean_loss), e.steps.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("loss trace", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// One masked view per (row, level), drawn fresh for `epoch`.
pub fn epoch_items<'a>(data: &'a EncodedDataset, probe: &ProbeConfig, seed: u64, epoch: usize) -> Result<Vec<TrainItem<'a>>> {
    let d = data.n_features();
    let mut items = Vec::with_capacity(data.n_rows() * probe.n_levels());
    for (n, x) in data.rows().enumerate() {
        for l in 0..probe.n_levels() {
            let p = probe.mask_probability(l)?;
            let mut rng = rng::stream(seed, Domain::TrainView, &[epoch as u64, n as u64, l as u64]);
            let mask = draw_mask(&mut rng, d, p);
            items.push(TrainItem {
                x,
                view: MaskedView::from_mask(x, &mask, l, 0),
            });
        }
    }
    Ok(items)
}

pub fn train<T: Scalar>(net: ReconNet<T>, data: &EncodedDataset, probe: &ProbeConfig, cfg: &TrainConfig) -> Result<(ReconNet<T>, LossTrace)> {
    train_with(net, data, probe, cfg, |_| {})
}

/// Trains on normal rows only, calling `on_epoch` after every epoch.
pub fn train_with<T: Scalar>(
    mut net: ReconNet<T>,
    data: &EncodedDataset,
    probe: &ProbeConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<(ReconNet<T>, LossTrace)> {
    cfg.validate()?;
    probe.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    if data.labels().is_some_and(|l| l.iter().any(|&y| y != 0)) {
        return Err(Error::config("training data must contain normal rows only"));
    }
    net.validate_cardinalities(data.specs())?;
    if net.n_levels() != probe.n_levels() {
        return Err(Error::config(format!(
            "model has {} levels, probe grid has {}",
            net.n_levels(),
            probe.n_levels()
        )));
    }

    let mut trace = LossTrace {
        initial: masked_loss(&net, &epoch_items(data, probe, cfg.seed, 0)?)?,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut opt = AdamW::new(net.n_params(), cfg);
    for epoch in 0..cfg.epochs {
        let items = epoch_items(data, probe, cfg.seed, epoch)?;
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, Domain::Shuffle, &[epoch as u64]));
        let mut total = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<TrainItem<'_>> = chunk.iter().map(|&i| items[i].clone()).collect();
            let key = DropoutKey {
                seed: cfg.seed,
                epoch: epoch as u64,
                step: step as u64,
            };
            let (loss, grads) = net.loss_and_grad(&batch, Some(key))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            net.update_params(|p| opt.step(p, &grads));
            total += loss * batch.len() as f64;
            steps += 1;
        }
        let e = EpochLoss {
            epoch: epoch + 1,
            mean_loss: total / items.len() as f64,
            steps,
        };
        on_epoch(&e);
        trace.epochs.push(e);
    }
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::schema::FeatureSpec;

    fn copies(n: usize) -> EncodedDataset {
        // Four binary features that are all copies of one fair bit.
        let specs = (0..4).map(|j| FeatureSpec::plain(format!("f{j}"), 2)).collect();
        let codes = (0..n).flat_map(|i| [(i % 2) as u32; 4]).collect();
        EncodedDataset::new(specs, codes, Some(vec![0; n])).unwrap()
    }

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            hidden_dim: 16,
            n_layers: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn learns_redundant_bits() {
        let data = copies(200);
        let probe = ProbeConfig::new(vec![0.3, 0.6], 4, 0).unwrap();
        let net = ReconNet::<f64>::new(small(), &[2; 4], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 1e-2,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let (_, trace) = train(net, &data, &probe, &cfg).unwrap();
        // Views with nothing masked contribute zero, so the start sits below log 2.
        assert!(trace.initial <= 2f64.ln() && trace.initial > 0.4);
        assert!(trace.final_loss().unwrap() < 0.5 * trace.initial, "{trace:?}");
    }

    #[test]
    fn deterministic_given_seeds() {
        let data = copies(40);
        let probe = ProbeConfig::new(vec![0.5], 2, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let net = ReconNet::<f64>::new(ModelConfig { dropout: 0.1, ..small() }, &[2; 4], 1).unwrap();
            train(net, &data, &probe, &cfg).unwrap()
        };
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(ta, tb);
    }

    #[test]
    fn rejects_anomalous_rows_and_zero_epochs() {
        let specs = vec![FeatureSpec::plain("a", 2)];
        let data = EncodedDataset::new(specs, vec![0, 1], Some(vec![0, 1])).unwrap();
        let probe = ProbeConfig::new(vec![0.5], 1, 0).unwrap();
        let net = ReconNet::<f64>::new(small(), &[2], 1).unwrap();
        assert!(train(net.clone(), &data, &probe, &TrainConfig::default()).is_err());
        let clean = copies(4);
        let net = ReconNet::<f64>::new(small(), &[2; 4], 1).unwrap();
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(net, &clean, &probe, &zero).is_err());
    }

    #[test]
    fn zero_lr_only_decays() {
        let data = copies(8);
        let probe = ProbeConfig::new(vec![0.5], 1, 0).unwrap();
        let net = ReconNet::<f64>::new(small(), &[2; 4], 1).unwrap();
        let before = net.params().to_vec();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            weight_decay: 0.1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (after, trace) = train(net, &data, &probe, &cfg).unwrap();
        assert_eq!(trace.epochs[0].steps, 2);
        for (a, b) in after.params().iter().zip(&before) {
            assert!((a - b * 0.81).abs() < 1e-12);
        }
    }
}
