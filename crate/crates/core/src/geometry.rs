//! Rotation helpers shared by the simulator and the estimator.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

pub fn exp_so3(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*phi)
}

pub fn log_so3(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    q.scaled_axis()
}

/// Inverse of the right Jacobian of SO(3).
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() + 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let coef = 1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + 0.5 * k + coef * k * k
}

/// Right Jacobian of SO(3).
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-6 {
        return Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    }
    let t2 = theta * theta;
    Matrix3::identity() - (1.0 - theta.cos()) / t2 * k
        + (theta - theta.sin()) / (t2 * theta) * k * k
}

/// Geodesic angle between two rotations, radians.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Rigid transform `x_target = rot * x_source + trans`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: UnitQuaternion<f64>,
    pub trans: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rot: UnitQuaternion::identity(),
            trans: Vector3::zeros(),
        }
    }

    pub fn new(rot: UnitQuaternion<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.trans
    }

    pub fn inverse(&self) -> Self {
        let rot = self.rot.inverse();
        Self {
            rot,
            trans: -(rot * self.trans),
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rot.to_rotation_matrix().into_inner()
    }
}

/// Serializable form of a unit quaternion, stored as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuatWxyz(pub [f64; 4]);

impl QuatWxyz {
    pub fn to_unit(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.0;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
    }

    pub fn from_unit(q: &UnitQuaternion<f64>) -> Self {
        Self([q.w, q.i, q.j, q.k])
    }
}

pub fn rotation_from_matrix(m: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m))
}
