use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A model with a flat parameter vector and an analytic MSE gradient.
pub trait Trainable {
    type Sample;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Mean squared error `(1/n) sum ||y - y_hat||^2` over all targets.
    fn loss(&self, data: &[Self::Sample]) -> f64;
    fn loss_and_grad(&self, data: &[Self::Sample]) -> (f64, Vec<f64>);
}

/// Uniform in [-0.5, 0.5] / sqrt(fan_in).
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize) {
    let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in out {
        *w = (rng.random::<f64>() - 0.5) * scale;
    }
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
