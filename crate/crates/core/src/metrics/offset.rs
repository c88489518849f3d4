//! Offset convergence and the positioning error induced by offset error.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::WindowRecord;

use super::ate::TrajectoryEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetSample {
    pub index: usize,
    /// Estimated offset, seconds.
    pub estimate: f64,
    /// Ground-truth offset, seconds.
    pub truth: f64,
}

/// Offset estimates in estimation order.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSeries {
    samples: Vec<OffsetSample>,
}

impl OffsetSeries {
    /// Indices must be strictly increasing.
    pub fn new(samples: Vec<OffsetSample>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::IndexMismatch(
                "offset series indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    /// One sample per window, truth taken as the window's mean true offset.
    pub fn from_records(records: &[WindowRecord]) -> Result<Self> {
        Self::new(
            records
                .iter()
                .map(|r| OffsetSample {
                    index: r.index,
                    estimate: r.td_est,
                    truth: r.td_true_mean,
                })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[OffsetSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Root mean square of estimate minus truth, seconds.
    pub fn rmse(&self) -> f64 {
        let n = self.samples.len().max(1) as f64;
        (self
            .samples
            .iter()
            .map(|s| (s.estimate - s.truth).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CitConfig {
    /// Fixed target offset, seconds. `None` compares every estimate with
    /// its own ground truth, which suits drifting offsets.
    pub target: Option<f64>,
    /// Error level, seconds.
    pub eps1: f64,
    /// Stability level between consecutive estimates, seconds.
    pub eps2: f64,
}

impl Default for CitConfig {
    fn default() -> Self {
        Self {
            target: None,
            eps1: 1e-3,
            eps2: 5e-4,
        }
    }
}

impl CitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::InvalidConfig(
                "metrics.cit: eps1 and eps2 must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Position in the series of the first estimate that is within `eps1` of
/// the target and within `eps2` of its predecessor. `None` when no
/// estimate qualifies, including series shorter than two.
pub fn cit(series: &OffsetSeries, config: &CitConfig) -> Option<usize> {
    let s = series.samples();
    (1..s.len()).find(|&k| {
        let target = config.target.unwrap_or(s[k].truth);
        (s[k].estimate - target).abs() <= config.eps1
            && (s[k].estimate - s[k - 1].estimate).abs() <= config.eps2
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpeResult {
    pub index: Vec<usize>,
    /// Offset error times estimated velocity, meters.
    pub error: Vec<Vector3<f64>>,
    /// Root mean square of the error norms, meters.
    pub rmse: f64,
}

/// Offset error times estimated velocity for every series sample. The
/// trajectory must carry exactly the series indices.
pub fn tpe(series: &OffsetSeries, traj: &TrajectoryEstimate) -> Result<TpeResult> {
    let s = series.samples();
    let t = traj.samples();
    if s.len() != t.len() || s.iter().zip(t).any(|(a, b)| a.index != b.index) {
        return Err(Error::IndexMismatch(
            "offset series and trajectory cover different indices".into(),
        ));
    }
    let error: Vec<Vector3<f64>> = s
        .iter()
        .zip(t)
        .map(|(o, p)| p.vel * (o.estimate - o.truth))
        .collect();
    let n = error.len().max(1) as f64;
    let rmse = (error.iter().map(|e| e.norm_squared()).sum::<f64>() / n).sqrt();
    Ok(TpeResult {
        index: s.iter().map(|o| o.index).collect(),
        error,
        rmse,
    })
}
