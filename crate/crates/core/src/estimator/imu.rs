use nalgebra::{Cholesky, SMatrix, SVector, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{exp_so3, log_so3, right_jacobian, right_jacobian_inv, skew};
use crate::sim::ImuSample;

use super::state::FrameState;

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Vector9 = SVector<f64, 9>;
/// Jacobian of the 9-D IMU residual with respect to `[theta, p, v]` of both
/// frames.
pub type ImuJacobian = SMatrix<f64, 9, 18>;

/// Relative motion between two instants in the earlier body frame, with
/// biases held at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preintegration {
    pub dt: f64,
    pub delta_rot: UnitQuaternion<f64>,
    pub delta_vel: Vector3<f64>,
    pub delta_pos: Vector3<f64>,
    /// Covariance of `[dtheta, dv, dp]`.
    pub cov: Matrix9,
}

impl Preintegration {
    pub fn identity() -> Self {
        Self {
            dt: 0.0,
            delta_rot: UnitQuaternion::identity(),
            delta_vel: Vector3::zeros(),
            delta_pos: Vector3::zeros(),
            cov: Matrix9::zeros(),
        }
    }

    /// Predicts the later state from the earlier one.
    pub fn propagate(&self, from: &FrameState, gravity: &Vector3<f64>, frame: usize) -> FrameState {
        let dt = self.dt;
        FrameState {
            frame,
            rot: from.rot * self.delta_rot,
            vel: from.vel + gravity * dt + from.rot * self.delta_vel,
            pos: from.pos + from.vel * dt + 0.5 * gravity * dt * dt + from.rot * self.delta_pos,
        }
    }
}

fn interpolate(a: &ImuSample, b: &ImuSample, t: f64) -> ImuSample {
    let s = if b.t > a.t {
        (t - a.t) / (b.t - a.t)
    } else {
        0.0
    };
    ImuSample {
        t,
        gyro: a.gyro + (b.gyro - a.gyro) * s,
        accel: a.accel + (b.accel - a.accel) * s,
    }
}

/// Midpoint-rule preintegration over `[t0, t1]` with first-order covariance
/// propagation. Readings at the interval ends are linearly interpolated.
pub fn preintegrate_imu(
    imu: &[ImuSample],
    t0: f64,
    t1: f64,
    gyro_sigma: f64,
    accel_sigma: f64,
) -> Result<Preintegration> {
    const EPS: f64 = 1e-12;
    if t1 < t0 || imu.len() < 2 || t0 < imu[0].t - EPS || t1 > imu[imu.len() - 1].t + EPS {
        return Err(Error::EmptyInterval { t0, t1 });
    }
    if t1 - t0 <= EPS {
        return Ok(Preintegration::identity());
    }
    let at = |t: f64| {
        let i = imu.partition_point(|s| s.t <= t).clamp(1, imu.len() - 1);
        interpolate(&imu[i - 1], &imu[i], t)
    };
    let mut knots = vec![at(t0)];
    let lo = imu.partition_point(|s| s.t <= t0 + EPS);
    let hi = imu.partition_point(|s| s.t < t1 - EPS);
    knots.extend_from_slice(&imu[lo..hi.max(lo)]);
    knots.push(at(t1));

    let mut pre = Preintegration::identity();
    let (var_g, var_a) = (gyro_sigma * gyro_sigma, accel_sigma * accel_sigma);
    for w in knots.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let h = b.t - a.t;
        if h <= 0.0 {
            continue;
        }
        let omega = 0.5 * (a.gyro + b.gyro);
        let d_rot = exp_so3(&(omega * h));
        let r_i = pre.delta_rot.to_rotation_matrix().into_inner();
        let next_rot = pre.delta_rot * d_rot;
        let acc = 0.5 * (pre.delta_rot * a.accel + next_rot * b.accel);
        let a_mean = 0.5 * (a.accel + b.accel);

        let mut am = Matrix9::identity();
        let dr_t = d_rot.to_rotation_matrix().into_inner().transpose();
        am.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr_t);
        let ra = r_i * skew(&a_mean);
        am.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-ra * h));
        am.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(-0.5 * ra * h * h));
        am.fixed_view_mut::<3, 3>(6, 3)
            .copy_from(&(nalgebra::Matrix3::identity() * h));
        let mut bg = SMatrix::<f64, 9, 3>::zeros();
        bg.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(right_jacobian(&(omega * h)) * h));
        let mut ba = SMatrix::<f64, 9, 3>::zeros();
        ba.fixed_view_mut::<3, 3>(3, 0).copy_from(&(r_i * h));
        ba.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(0.5 * r_i * h * h));
        pre.cov = am * pre.cov * am.transpose()
            + bg * bg.transpose() * var_g
            + ba * ba.transpose() * var_a;

        pre.delta_pos += pre.delta_vel * h + 0.5 * acc * h * h;
        pre.delta_vel += acc * h;
        pre.delta_rot = next_rot;
        pre.delta_rot.renormalize();
        pre.dt += h;
    }
    Ok(pre)
}

/// Whitened IMU constraint between two consecutive window frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuFactor {
    pub from: usize,
    pub to: usize,
    pub preint: Preintegration,
    /// `L^-1` for `cov + floor = L L^T`.
    pub sqrt_info: Matrix9,
}

impl ImuFactor {
    /// `floor` holds variances added to the rotation, velocity and position
    /// blocks so noiseless preintegration stays invertible.
    pub fn new(from: usize, to: usize, preint: Preintegration, floor: [f64; 3]) -> Self {
        let mut cov = preint.cov;
        for b in 0..3 {
            for d in 0..3 {
                cov[(3 * b + d, 3 * b + d)] += floor[b];
            }
        }
        let l = Cholesky::new(cov)
            .expect("floored covariance is positive definite")
            .l();
        let sqrt_info = l
            .try_inverse()
            .expect("Cholesky factor of a positive definite matrix is invertible");
        Self {
            from,
            to,
            preint,
            sqrt_info,
        }
    }

    /// Unwhitened residual `[r_rot, r_vel, r_pos]`.
    pub fn residual(&self, xi: &FrameState, xj: &FrameState, gravity: &Vector3<f64>) -> Vector9 {
        self.evaluate(xi, xj, gravity, false).0
    }

    /// Unwhitened residual and, if requested, its Jacobian with respect to
    /// `[theta_i, p_i, v_i, theta_j, p_j, v_j]` under right rotation
    /// perturbations.
    pub fn evaluate(
        &self,
        xi: &FrameState,
        xj: &FrameState,
        gravity: &Vector3<f64>,
        with_jacobian: bool,
    ) -> (Vector9, ImuJacobian) {
        let pre = &self.preint;
        let dt = pre.dt;
        let ri_t = xi.rot.inverse();
        let r_err = pre.delta_rot.inverse() * ri_t * xj.rot;
        let r_rot = log_so3(&r_err);
        let dv_world = xj.vel - xi.vel - gravity * dt;
        let dp_world = xj.pos - xi.pos - xi.vel * dt - 0.5 * gravity * dt * dt;
        let dv_body = ri_t * dv_world;
        let dp_body = ri_t * dp_world;
        let mut r = Vector9::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&r_rot);
        r.fixed_rows_mut::<3>(3)
            .copy_from(&(dv_body - pre.delta_vel));
        r.fixed_rows_mut::<3>(6)
            .copy_from(&(dp_body - pre.delta_pos));

        let mut j = ImuJacobian::zeros();
        if with_jacobian {
            let jr_inv = right_jacobian_inv(&r_rot);
            let ri_t_m = ri_t.to_rotation_matrix().into_inner();
            let rel = (xj.rot.inverse() * xi.rot)
                .to_rotation_matrix()
                .into_inner();
            // Rotation row.
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-jr_inv * rel));
            j.fixed_view_mut::<3, 3>(0, 9).copy_from(&jr_inv);
            // Velocity row.
            j.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&dv_body));
            j.fixed_view_mut::<3, 3>(3, 6).copy_from(&(-ri_t_m));
            j.fixed_view_mut::<3, 3>(3, 15).copy_from(&ri_t_m);
            // Position row.
            j.fixed_view_mut::<3, 3>(6, 0).copy_from(&skew(&dp_body));
            j.fixed_view_mut::<3, 3>(6, 3).copy_from(&(-ri_t_m));
            j.fixed_view_mut::<3, 3>(6, 6).copy_from(&(-ri_t_m * dt));
            j.fixed_view_mut::<3, 3>(6, 12).copy_from(&ri_t_m);
        }
        (r, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle_between;
    use crate::sim::{simulate, OffsetModel, Profile, ProfileParams, SimConfig};

    fn constant_samples(
        gyro: Vector3<f64>,
        accel: Vector3<f64>,
        n: usize,
        h: f64,
    ) -> Vec<ImuSample> {
        (0..=n)
            .map(|i| ImuSample {
                t: i as f64 * h,
                gyro,
                accel,
            })
            .collect()
    }

    #[test]
    fn zero_interval_is_identity() {
        let imu = constant_samples(
            Vector3::new(0.3, 0.0, 1.0),
            Vector3::new(0.0, 0.0, 9.81),
            10,
            0.005,
        );
        let p = preintegrate_imu(&imu, 0.02, 0.02, 1e-3, 1e-2).unwrap();
        assert_eq!(p, Preintegration::identity());
    }

    #[test]
    fn uncovered_interval_is_an_error() {
        let imu = constant_samples(Vector3::zeros(), Vector3::zeros(), 10, 0.005);
        assert!(matches!(
            preintegrate_imu(&imu, 0.0, 0.2, 0.0, 0.0),
            Err(Error::EmptyInterval { .. })
        ));
        assert!(preintegrate_imu(&[], 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn static_case_has_no_relative_motion() {
        let g = Vector3::new(0.0, 0.0, -9.81);
        let imu = constant_samples(Vector3::zeros(), -g, 10, 0.005);
        let p = preintegrate_imu(&imu, 0.0, 0.05, 0.0, 0.0).unwrap();
        assert!(p.delta_rot.angle() < 1e-15);
        let start = FrameState {
            frame: 0,
            rot: UnitQuaternion::identity(),
            pos: Vector3::new(1.0, 2.0, 3.0),
            vel: Vector3::zeros(),
        };
        let end = p.propagate(&start, &g, 1);
        assert!(end.vel.norm() < 1e-12);
        assert!((end.pos - start.pos).norm() < 1e-12);
    }

    #[test]
    fn constant_rate_rotation_angle() {
        let w = 1.3;
        let imu = constant_samples(Vector3::new(0.0, 0.0, w), Vector3::zeros(), 10, 0.005);
        let p = preintegrate_imu(&imu, 0.0, 0.05, 0.0, 0.0).unwrap();
        assert!((p.delta_rot.angle() - w * 0.05).abs() < 1e-6);
    }

    #[test]
    fn covariance_grows_with_noise() {
        let imu = constant_samples(
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(0.5, 0.0, 9.81),
            20,
            0.005,
        );
        let p = preintegrate_imu(&imu, 0.0, 0.1, 1e-3, 1e-2).unwrap();
        assert!(p.cov[(0, 0)] > 0.0 && p.cov[(3, 3)] > 0.0 && p.cov[(6, 6)] > 0.0);
        assert!((p.cov - p.cov.transpose()).norm() < 1e-18);
        let q = preintegrate_imu(&imu, 0.0, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(q.cov, Matrix9::zeros());
    }

    #[test]
    fn aggressive_segment_matches_ground_truth() {
        let mut c = SimConfig::new(
            Profile::Aggressive,
            ProfileParams::new(5.0, 0.7, 3.0),
            OffsetModel::constant(0.0),
            3,
        );
        c.rig = c.rig.with_noise(0.0, 0.0, 0.0);
        let ds = simulate(&c).unwrap();
        let g = ds.rig().gravity();
        for k in [5usize, 20, 40] {
            let (t0, t1) = (ds.frames[k].stamp, ds.frames[k + 1].stamp);
            let p = preintegrate_imu(&ds.imu, t0, t1, 0.0, 0.0).unwrap();
            let start = FrameState {
                frame: k,
                rot: ds.trajectory.rotation(t0),
                pos: ds.trajectory.position(t0),
                vel: ds.trajectory.velocity(t0),
            };
            let end = p.propagate(&start, &g, k + 1);
            assert!((end.pos - ds.trajectory.position(t1)).norm() < 1e-3);
            assert!(rotation_angle_between(&end.rot, &ds.trajectory.rotation(t1)) < 1e-3);
            let fac = ImuFactor::new(k, k + 1, p, [1e-8; 3]);
            let truth_end = FrameState {
                frame: k + 1,
                rot: ds.trajectory.rotation(t1),
                pos: ds.trajectory.position(t1),
                vel: ds.trajectory.velocity(t1),
            };
            assert!(fac.residual(&start, &truth_end, &g).norm() < 1e-3);
        }
    }
}
