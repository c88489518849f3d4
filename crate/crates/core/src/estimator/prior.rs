use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// Centered on the TPN prediction.
    Tpn,
    /// Centered on the previous window's estimate.
    RandomWalk,
    /// Centered on the filter's propagated mean.
    Filter,
}

/// Gaussian prior factor on the offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdPrior {
    pub mean: f64,
    /// Seconds squared; must be positive.
    pub variance: f64,
    pub kind: PriorKind,
}

impl TdPrior {
    pub fn new(mean: f64, variance: f64, kind: PriorKind) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "offset prior variance must be > 0, got {variance}"
            )));
        }
        Ok(Self {
            mean,
            variance,
            kind,
        })
    }
}

pub const TPN_BUFFER_CAPACITY: usize = 30;

/// FIFO of past window offset estimates, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TpnLabelBuffer {
    labels: VecDeque<f64>,
    capacity: usize,
}

impl Default for TpnLabelBuffer {
    fn default() -> Self {
        Self::with_capacity(TPN_BUFFER_CAPACITY)
    }
}

impl TpnLabelBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            labels: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    /// Appends a label, evicting the oldest one when full.
    pub fn push(&mut self, td: f64) {
        self.labels.push_back(td);
        while self.labels.len() > self.capacity {
            self.labels.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.labels.back().copied()
    }

    pub fn oldest(&self) -> Option<f64> {
        self.labels.front().copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.labels.iter().copied().collect()
    }
}

/// Scalar filter propagation of the offset toward a TPN prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPropagation {
    pub mean: f64,
    pub variance: f64,
    /// `(td_tpn - td_prev) / dt`, dimensionless.
    pub jacobian: f64,
}

/// Moves the mean to the prediction; the variance takes the unit-gain
/// linearized step plus process noise.
pub fn ekf_propagate_td(
    td_prev: f64,
    td_tpn: f64,
    dt: f64,
    variance: f64,
    process_noise: f64,
) -> Result<FilterPropagation> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "filter step must be > 0, got {dt}"
        )));
    }
    Ok(FilterPropagation {
        mean: td_tpn,
        variance: variance + process_noise,
        jacobian: (td_tpn - td_prev) / dt,
    })
}

/// Scalar Kalman measurement update.
pub fn ekf_update_td(
    mean: f64,
    variance: f64,
    measured: f64,
    measurement_variance: f64,
) -> (f64, f64) {
    let gain = variance / (variance + measurement_variance);
    (mean + gain * (measured - mean), (1.0 - gain) * variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_keeps_latest_thirty() {
        let mut b = TpnLabelBuffer::default();
        for w in 0..45 {
            b.push(w as f64);
        }
        assert_eq!(b.len(), 30);
        assert_eq!(b.oldest(), Some(15.0));
        assert_eq!(b.last(), Some(44.0));
    }

    #[test]
    fn prior_variance_must_be_positive() {
        assert!(TdPrior::new(0.0, 0.0, PriorKind::Tpn).is_err());
        assert!(TdPrior::new(0.0, 1e-6, PriorKind::Tpn).is_ok());
    }

    #[test]
    fn constant_prediction_has_zero_jacobian() {
        let p = ekf_propagate_td(0.01, 0.01, 0.25, 1e-6, 0.0).unwrap();
        assert_eq!(p.jacobian, 0.0);
        assert_eq!(p.mean, 0.01);
    }

    #[test]
    fn jacobian_arithmetic() {
        let p = ekf_propagate_td(0.010, 0.0105, 0.05, 1e-6, 0.0).unwrap();
        assert!((p.jacobian - 0.01).abs() < 1e-12);
        assert!(ekf_propagate_td(0.0, 0.0, 0.0, 1e-6, 0.0).is_err());
    }

    #[test]
    fn variance_never_grows_without_process_noise() {
        let (mut mean, mut var) = (0.0, 1e-6);
        for k in 0..50 {
            let p = ekf_propagate_td(mean, mean, 0.25, var, 0.0).unwrap();
            assert!(p.variance <= var);
            let (m, v) = ekf_update_td(p.mean, p.variance, 0.01 + 1e-4 * (k % 3) as f64, 4e-8);
            assert!(v <= p.variance);
            mean = m;
            var = v;
        }
    }
}
