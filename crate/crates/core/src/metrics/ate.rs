//! Absolute trajectory error with optional rigid alignment.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_from_matrix, Pose};

/// One estimated frame paired with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub index: usize,
    pub est: Pose,
    /// Estimated world velocity, m/s.
    pub vel: Vector3<f64>,
    pub truth: Pose,
    pub truth_vel: Vector3<f64>,
}

impl TrajectorySample {
    /// A sample whose estimate equals the truth: identity rotation at `pos`,
    /// at rest.
    pub fn at_rest(index: usize, pos: Vector3<f64>) -> Self {
        let p = Pose::new(UnitQuaternion::identity(), pos);
        Self {
            index,
            est: p,
            vel: Vector3::zeros(),
            truth: p,
            truth_vel: Vector3::zeros(),
        }
    }

    pub fn with_velocity(mut self, vel: Vector3<f64>) -> Self {
        self.vel = vel;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    samples: Vec<TrajectorySample>,
}

impl TrajectoryEstimate {
    /// Indices must be strictly increasing.
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::IndexMismatch(
                "trajectory indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `transform` to every estimated pose and velocity.
    pub fn transformed(&self, transform: &Pose) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| TrajectorySample {
                est: transform.compose(&s.est),
                vel: transform.rot * s.vel,
                ..*s
            })
            .collect();
        Self { samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    None,
    #[default]
    Rigid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteResult {
    pub index: Vec<usize>,
    /// Position error norms, meters.
    pub ape: Vec<f64>,
    /// Rotation error angles, degrees.
    pub are: Vec<f64>,
    pub ape_rmse: f64,
    pub are_rmse: f64,
    /// Alignment actually applied.
    pub alignment: Alignment,
    /// Rigid alignment was requested but the estimate was too degenerate.
    pub alignment_fallback: bool,
}

/// Closed-form rotation and translation taking `source` points onto
/// `target` in the least-squares sense. `None` when the source points are
/// collinear or fewer than three.
pub fn rigid_alignment(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Option<Pose> {
    let n = source.len();
    if n < 3 || target.len() != n {
        return None;
    }
    let mu_s = source.iter().sum::<Vector3<f64>>() / n as f64;
    let mu_t = target.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose();
        spread += ds * ds.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return None;
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rot = rotation_from_matrix(&(u * d * v_t));
    Some(Pose::new(rot, mu_t - rot * mu_s))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Position and rotation error of the estimate against ground truth, after
/// the requested alignment.
pub fn ate(traj: &TrajectoryEstimate, align: Alignment) -> AteResult {
    let mut applied = Alignment::None;
    let mut fallback = false;
    let aligned = match align {
        Alignment::None => traj.clone(),
        Alignment::Rigid => {
            let est: Vec<Vector3<f64>> = traj.samples().iter().map(|s| s.est.trans).collect();
            let truth: Vec<Vector3<f64>> = traj.samples().iter().map(|s| s.truth.trans).collect();
            match rigid_alignment(&est, &truth) {
                Some(t) => {
                    applied = Alignment::Rigid;
                    traj.transformed(&t)
                }
                None => {
                    fallback = true;
                    traj.clone()
                }
            }
        }
    };
    let s = aligned.samples();
    let ape: Vec<f64> = s
        .iter()
        .map(|p| (p.est.trans - p.truth.trans).norm())
        .collect();
    let are: Vec<f64> = s
        .iter()
        .map(|p| p.est.rot.angle_to(&p.truth.rot).to_degrees())
        .collect();
    AteResult {
        index: s.iter().map(|p| p.index).collect(),
        ape_rmse: rms(&ape),
        are_rmse: rms(&are),
        ape,
        are,
        alignment: applied,
        alignment_fallback: fallback,
    }
}
