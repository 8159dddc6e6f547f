use super::net::{cast, Scalar};
use super::TrainConfig;

/// Adam with decoupled weight decay.
///
/// Each step applies `theta <- theta * (1 - weight_decay) - lr * m_hat / (sqrt(v_hat) + eps)`;
/// the decay does not scale with the learning rate.
#[derive(Clone, Debug)]
pub struct AdamW<T: Scalar = f64> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        AdamW {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1: T = cast(1.0 / (1.0 - self.beta1.powi(self.t)));
        let c2: T = cast(1.0 / (1.0 - self.beta2.powi(self.t)));
        let (b1, b2): (T, T) = (cast(self.beta1), cast(self.beta2));
        let (g1, g2): (T, T) = (cast(1.0 - self.beta1), cast(1.0 - self.beta2));
        let (lr, eps, decay): (T, T, T) = (cast(self.lr), cast(self.eps), cast(1.0 - self.weight_decay));
        // Moments below `tiny` are dropped so that no product below ever
        // lands in the (very slow) subnormal range; they are far below any
        // update that survives the `eps` in the denominator.
        let tiny = T::min_positive_value() / T::epsilon();
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g.keep_above(tiny);
            *m = (b1 * *m + g1 * g).keep_above(tiny);
            *v = (b2 * *v + g2 * g * g).keep_above(tiny);
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
