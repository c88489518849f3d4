//! Analytic trajectories built from harmonic channels.
//!
//! Every channel is `offset + slope * t + sum(amp * sin(freq * t + phase))`, so
//! positions and ZYX Euler angles have exact first and second derivatives.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, vee, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Circle,
    Figure8,
    Aggressive,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Profile::Circle),
            "figure8" => Ok(Profile::Figure8),
            "aggressive" => Ok(Profile::Aggressive),
            other => Err(Error::InvalidProfileParameter(format!(
                "unknown profile {other:?}"
            ))),
        }
    }
}

/// Profile parameters. `scale` is the radius (circle) or lobe size (figure8,
/// aggressive) in meters; `rate` is the base angular rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub scale: f64,
    pub rate: f64,
    #[serde(default = "default_height")]
    pub height: f64,
    pub duration: f64,
}

fn default_height() -> f64 {
    1.5
}

impl ProfileParams {
    pub fn new(scale: f64, rate: f64, duration: f64) -> Self {
        Self {
            scale,
            rate,
            height: default_height(),
            duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Harmonic {
    amp: f64,
    freq: f64,
    phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Channel {
    offset: f64,
    slope: f64,
    terms: Vec<Harmonic>,
}

impl Channel {
    fn constant(offset: f64) -> Self {
        Self {
            offset,
            slope: 0.0,
            terms: Vec::new(),
        }
    }

    fn with(mut self, amp: f64, freq: f64, phase: f64) -> Self {
        self.terms.push(Harmonic { amp, freq, phase });
        self
    }

    fn sloped(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    fn value(&self, t: f64) -> f64 {
        self.offset
            + self.slope * t
            + self
                .terms
                .iter()
                .map(|h| h.amp * (h.freq * t + h.phase).sin())
                .sum::<f64>()
    }

    fn d1(&self, t: f64) -> f64 {
        self.slope
            + self
                .terms
                .iter()
                .map(|h| h.amp * h.freq * (h.freq * t + h.phase).cos())
                .sum::<f64>()
    }

    fn d2(&self, t: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|h| h.amp * h.freq * h.freq * (h.freq * t + h.phase).sin())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub profile: Profile,
    pub params: ProfileParams,
    position: [Channel; 3],
    // yaw, pitch, roll (ZYX)
    euler: [Channel; 3],
}

pub fn make_trajectory(profile: Profile, params: ProfileParams) -> Result<Trajectory> {
    let ProfileParams {
        scale: s,
        rate: w,
        height: h,
        duration,
    } = params;
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidProfileParameter(format!(
            "scale must be > 0, got {s}"
        )));
    }
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::InvalidProfileParameter(format!(
            "rate must be >= 0, got {w}"
        )));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidProfileParameter(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    if !h.is_finite() {
        return Err(Error::InvalidProfileParameter(
            "height must be finite".into(),
        ));
    }
    let (position, euler) = match profile {
        Profile::Circle => (
            [
                Channel::constant(0.0).with(s, w, FRAC_PI_2),
                Channel::constant(0.0).with(s, w, 0.0),
                Channel::constant(h),
            ],
            [
                Channel::constant(FRAC_PI_2).sloped(w),
                Channel::constant(0.0),
                Channel::constant(0.0),
            ],
        ),
        Profile::Figure8 => (
            [
                Channel::constant(0.0).with(s, w, 0.0),
                Channel::constant(0.0).with(0.5 * s, 2.0 * w, 0.0),
                Channel::constant(h).with(0.1 * s, w, 0.5),
            ],
            [
                Channel::constant(0.0).with(0.4, w, 0.0),
                Channel::constant(0.0).with(0.05, 2.0 * w, 0.0),
                Channel::constant(0.0).with(0.05, 3.0 * w, 0.3),
            ],
        ),
        Profile::Aggressive => (
            [
                Channel::constant(0.0)
                    .with(s, w, FRAC_PI_2)
                    .with(0.25 * s, 2.7 * w, 0.0),
                Channel::constant(0.0)
                    .with(s, w, 0.0)
                    .with(0.2 * s, 3.1 * w, 1.0),
                Channel::constant(h).with(0.3, 1.9 * w, 0.2),
            ],
            [
                Channel::constant(FRAC_PI_2)
                    .sloped(w)
                    .with(0.6, 3.5 * w, 0.0),
                Channel::constant(0.0).with(0.08, 2.3 * w, 0.3),
                Channel::constant(0.0).with(0.12, 2.9 * w, 0.7),
            ],
        ),
    };
    Ok(Trajectory {
        profile,
        params,
        position,
        euler,
    })
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.params.duration
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.position[i].value(t))
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.position[i].d1(t))
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.position[i].d2(t))
    }

    /// World-from-body rotation matrix.
    pub fn rotation_matrix(&self, t: f64) -> Matrix3<f64> {
        let [yaw, pitch, roll] = [
            self.euler[0].value(t),
            self.euler[1].value(t),
            self.euler[2].value(t),
        ];
        rz(yaw) * ry(pitch) * rx(roll)
    }

    pub fn rotation(&self, t: f64) -> UnitQuaternion<f64> {
        let [yaw, pitch, roll] = [
            self.euler[0].value(t),
            self.euler[1].value(t),
            self.euler[2].value(t),
        ];
        UnitQuaternion::from_euler_angles(roll, pitch, yaw)
    }

    /// Time derivative of the world-from-body rotation matrix.
    pub fn rotation_dot(&self, t: f64) -> Matrix3<f64> {
        let [yaw, pitch, roll] = [
            self.euler[0].value(t),
            self.euler[1].value(t),
            self.euler[2].value(t),
        ];
        let [dyaw, dpitch, droll] = [
            self.euler[0].d1(t),
            self.euler[1].d1(t),
            self.euler[2].d1(t),
        ];
        let (z, y, x) = (rz(yaw), ry(pitch), rx(roll));
        z * skew(&Vector3::z()) * y * x * dyaw
            + z * y * skew(&Vector3::y()) * x * dpitch
            + z * y * x * skew(&Vector3::x()) * droll
    }

    /// Body-frame angular velocity, rad/s.
    pub fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        vee(&(self.rotation_matrix(t).transpose() * self.rotation_dot(t)))
    }

    /// World-from-body pose.
    pub fn pose(&self, t: f64) -> Pose {
        Pose::new(self.rotation(t), self.position(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_profiles() -> Vec<Trajectory> {
        vec![
            make_trajectory(Profile::Circle, ProfileParams::new(2.0, 1.0, 10.0)).unwrap(),
            make_trajectory(Profile::Figure8, ProfileParams::new(2.0, 0.5, 10.0)).unwrap(),
            make_trajectory(Profile::Aggressive, ProfileParams::new(5.0, 0.7, 10.0)).unwrap(),
        ]
    }

    #[test]
    fn static_circle_has_zero_velocity() {
        let traj = make_trajectory(Profile::Circle, ProfileParams::new(1.0, 0.0, 5.0)).unwrap();
        let p0 = traj.position(0.0);
        for t in [0.0, 1.3, 4.9] {
            assert_eq!(traj.position(t), p0);
            assert_eq!(traj.velocity(t), Vector3::zeros());
            assert_eq!(traj.angular_velocity(t), Vector3::zeros());
        }
    }

    #[test]
    fn circle_speed_is_radius_times_rate() {
        let traj = make_trajectory(Profile::Circle, ProfileParams::new(2.0, 1.0, 10.0)).unwrap();
        for t in [0.0, 0.7, 3.1, 9.9] {
            assert_relative_eq!(traj.velocity(t).norm(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn figure8_velocity_matches_central_difference() {
        let traj = make_trajectory(Profile::Figure8, ProfileParams::new(2.0, 0.5, 10.0)).unwrap();
        let h = 1e-4;
        for t in [0.1, 1.0, 2.5, 7.3] {
            let fd = (traj.position(t + h) - traj.position(t - h)) / (2.0 * h);
            assert!((fd - traj.velocity(t)).norm() < 1e-6);
            let fda = (traj.velocity(t + h) - traj.velocity(t - h)) / (2.0 * h);
            assert!((fda - traj.acceleration(t)).norm() < 1e-6);
        }
    }

    #[test]
    fn rotations_are_orthonormal() {
        for traj in all_profiles() {
            for i in 0..50 {
                let t = i as f64 * 0.2;
                let r = traj.rotation_matrix(t);
                assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
                assert!((r.determinant() - 1.0).abs() < 1e-9);
                let q = traj.rotation(t).to_rotation_matrix().into_inner();
                assert!((q - r).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn angular_velocity_matches_finite_difference() {
        for traj in all_profiles() {
            let h = 1e-5;
            for t in [0.3, 2.0, 5.5] {
                let dr = (traj.rotation_matrix(t + h) - traj.rotation_matrix(t - h)) / (2.0 * h);
                assert!((dr - traj.rotation_dot(t)).norm() < 1e-7);
                let rel = traj.rotation(t).inverse() * traj.rotation(t + h);
                let fd = rel.scaled_axis() / h;
                assert!((fd - traj.angular_velocity(t)).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn aggressive_profile_is_high_dynamic() {
        let traj =
            make_trajectory(Profile::Aggressive, ProfileParams::new(5.0, 0.7, 30.0)).unwrap();
        let both = (0..3000)
            .map(|i| i as f64 * 0.01)
            .filter(|&t| traj.angular_velocity(t).norm() > 1.5 && traj.velocity(t).norm() > 3.0)
            .count();
        assert!(both > 100, "only {both} high-dynamic samples");
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(make_trajectory(Profile::Circle, ProfileParams::new(0.0, 1.0, 1.0)).is_err());
        assert!(make_trajectory(Profile::Circle, ProfileParams::new(1.0, -1.0, 1.0)).is_err());
        assert!(make_trajectory(Profile::Figure8, ProfileParams::new(1.0, 1.0, 0.0)).is_err());
        assert!("spiral".parse::<Profile>().is_err());
    }
}
