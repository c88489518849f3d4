//! Time-varying camera-IMU offset: `td(k) = td(k-1) + bias + n`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetModel {
    /// Offset of frame 0, seconds.
    pub initial: f64,
    /// Accumulated drift per second of data (s/s). Converted to a per-frame
    /// bias by dividing by the camera rate.
    #[serde(default)]
    pub drift_per_second: f64,
    /// Standard deviation of the per-frame white noise, seconds.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OffsetModel {
    pub fn constant(initial: f64) -> Self {
        Self {
            initial,
            drift_per_second: 0.0,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn bias_per_frame(&self, camera_rate: f64) -> f64 {
        self.drift_per_second / camera_rate
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() || !self.drift_per_second.is_finite() {
            return Err(Error::InvalidConfig("offset: values must be finite".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidConfig("offset.sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// One step of the offset evolution. With `sigma == 0` no random number is
/// drawn, so the stream is left untouched.
pub fn evolve_offset<R: Rng + ?Sized>(
    prev: f64,
    model: &OffsetModel,
    camera_rate: f64,
    rng: &mut R,
) -> f64 {
    let noise = if model.sigma > 0.0 {
        Normal::new(0.0, model.sigma)
            .expect("validated sigma")
            .sample(rng)
    } else {
        0.0
    };
    prev + model.bias_per_frame(camera_rate) + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_model_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = OffsetModel::constant(0.010);
        assert_eq!(evolve_offset(0.010, &m, 20.0, &mut rng), 0.010);
    }

    #[test]
    fn drift_accumulates_per_second() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = OffsetModel {
            initial: 0.0,
            drift_per_second: 1e-4,
            sigma: 0.0,
            seed: 0,
        };
        assert!((m.bias_per_frame(20.0) - 5e-6).abs() < 1e-18);
        let mut td = 0.0;
        for _ in 0..20 {
            td = evolve_offset(td, &m, 20.0, &mut rng);
        }
        assert!((td - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn increment_variance_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = 5e-5;
        let m = OffsetModel {
            initial: 0.0,
            drift_per_second: 0.0,
            sigma,
            seed: 0,
        };
        let mut td = 0.0;
        let incs: Vec<f64> = (0..10_000)
            .map(|_| {
                let next = evolve_offset(td, &m, 20.0, &mut rng);
                let d = next - td;
                td = next;
                d
            })
            .collect();
        let mean = incs.iter().sum::<f64>() / incs.len() as f64;
        let var = incs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (incs.len() - 1) as f64;
        assert!(
            (var / (sigma * sigma) - 1.0).abs() < 0.1,
            "variance ratio {}",
            var / (sigma * sigma)
        );
    }
}
