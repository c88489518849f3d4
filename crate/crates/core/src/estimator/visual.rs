use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::frontend::FeatureId;
use crate::geometry::{skew, Pose};
use crate::sim::{Intrinsics, NEAR_PLANE};

use super::state::FrameState;

/// Moves an observation to where the feature was at the reported stamp:
/// `z - V * td`.
pub fn shift_observation(z: &Vector2<f64>, velocity: &Vector2<f64>, td: f64) -> Vector2<f64> {
    z - velocity * td
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocitySource {
    ConstantSpeed,
    ItsFvon,
    F2fFvon,
    /// No usable velocity; the factor carries no offset information.
    ZeroFallback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualFactor {
    pub feature: FeatureId,
    pub frame: usize,
    pub pixel: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub source: VelocitySource,
    /// Isotropic pixel standard deviation.
    pub sigma: f64,
    /// How the velocity depends on this track's own noisy pixels, when it
    /// was differenced from them.
    pub velocity_noise: Option<VelocityNoise>,
}

/// Linear dependence of a velocity on pixel noise:
/// `dV = own * n_frame + other * n_other_frame`, in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityNoise {
    pub own: f64,
    pub other: f64,
    pub other_frame: usize,
}

impl VisualFactor {
    /// Noise of the whitened residual as a combination of the track's pixel
    /// noises: entries `(frame, c0, c1)` meaning coefficient `c0 + c1 * td`.
    pub fn noise_terms(&self) -> [Option<(usize, f64, f64)>; 2] {
        match self.velocity_noise {
            Some(n) => [
                Some((self.frame, 1.0, -n.own)),
                Some((n.other_frame, 0.0, -n.other)),
            ],
            None => [Some((self.frame, 1.0, 0.0)), None],
        }
    }

    pub fn effective_velocity(&self) -> Vector2<f64> {
        match self.source {
            VelocitySource::ZeroFallback => Vector2::zeros(),
            _ => self.velocity,
        }
    }
}

/// Unwhitened visual residual with its Jacobians with respect to the body
/// rotation (right perturbation), body position, world point and offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualEval {
    pub residual: Vector2<f64>,
    pub d_rot: Matrix2x3<f64>,
    pub d_pos: Matrix2x3<f64>,
    pub d_point: Matrix2x3<f64>,
    pub d_td: Vector2<f64>,
}

/// `r = shift(z, V, td) - pi(cam_from_imu * body^-1 * P)`. Returns `None` when
/// the point is not in front of the camera.
pub fn visual_residual(
    factor: &VisualFactor,
    body: &FrameState,
    point: &Vector3<f64>,
    td: f64,
    cam_from_imu: &Pose,
    intrinsics: &Intrinsics,
) -> Option<VisualEval> {
    let rt = body.rot.inverse();
    let p_body = rt * (point - body.pos);
    let p_cam = cam_from_imu.transform(&p_body);
    if p_cam.z <= NEAR_PLANE {
        return None;
    }
    let v = factor.effective_velocity();
    let residual = shift_observation(&factor.pixel, &v, td) - intrinsics.project_raw(&p_cam);
    // r = z' - pi(p_c), so every block carries a minus sign.
    let a =
        -intrinsics.project_jacobian(&p_cam) * cam_from_imu.rot.to_rotation_matrix().into_inner();
    let rt_m = rt.to_rotation_matrix().into_inner();
    Some(VisualEval {
        residual,
        d_rot: a * skew(&p_body),
        d_pos: -a * rt_m,
        d_point: a * rt_m,
        d_td: -v,
    })
}
