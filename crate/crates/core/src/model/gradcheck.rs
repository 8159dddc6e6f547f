use rand::seq::index;

use super::net::{cast, wide, DropoutKey, ReconNet, Scalar, TrainItem};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Largest relative error between analytic and central-difference gradients
/// over `n_samples` randomly chosen parameters.
///
/// The relative error of one parameter is `|a - n| / (|n| + 1e-8)`. Dropout,
/// if any, uses the same key for every evaluation.
pub fn grad_check<T: Scalar>(
    net: &ReconNet<T>,
    items: &[TrainItem<'_>],
    eps: f64,
    n_samples: usize,
    seed: u64,
    dropout: Option<DropoutKey>,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let (_, analytic) = net.loss_and_grad(items, dropout)?;
    let n = net.n_params();
    let picks = index::sample(&mut rng::stream(seed, Domain::Fuzz, &[n as u64]), n, n_samples.min(n)).into_vec();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in picks {
        let orig = net.params()[i];
        let (up, down) = (orig + cast(eps), orig - cast(eps));
        probe.update_params(|p| p[i] = up);
        let plus = probe.loss(items, dropout)?;
        probe.update_params(|p| p[i] = down);
        let minus = probe.loss(items, dropout)?;
        probe.update_params(|p| p[i] = orig);
        // Divide by the step actually taken after rounding to T.
        let numeric = (plus - minus) / (wide(up) - wide(down));
        worst = worst.max((wide(analytic[i]) - numeric).abs() / (numeric.abs() + 1e-8));
    }
    Ok(worst)
}
