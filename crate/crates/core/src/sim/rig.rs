//! Sensor rig: pinhole camera, camera-IMU extrinsics and noise levels.

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, QuatWxyz};

use super::trajectory::Trajectory;

/// Points closer than this along the optical axis are treated as out of view.
pub const NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn in_bounds(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x <= self.width && px.y >= 0.0 && px.y <= self.height
    }

    /// Pinhole projection of a camera-frame point, without visibility checks.
    pub fn project_raw(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Jacobian of [`Self::project_raw`] with respect to the camera-frame point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    /// Ray through a pixel, scaled to unit depth.
    pub fn back_project(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    pub intrinsics: Intrinsics,
    /// Rotation taking IMU-frame vectors into the camera frame.
    pub cam_from_imu_rot: QuatWxyz,
    /// Position of the IMU origin in the camera frame, meters.
    pub cam_from_imu_trans: [f64; 3],
    pub camera_rate: f64,
    pub imu_rate: f64,
    pub pixel_sigma: f64,
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub gravity: [f64; 3],
}

impl Default for SensorRig {
    fn default() -> Self {
        // Camera looks along body +x with image x to the body's right and
        // image y down.
        let r = nalgebra::Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        let q = crate::geometry::rotation_from_matrix(&r);
        Self {
            intrinsics: Intrinsics {
                fx: 400.0,
                fy: 400.0,
                cx: 320.0,
                cy: 240.0,
                width: 640.0,
                height: 480.0,
            },
            cam_from_imu_rot: QuatWxyz::from_unit(&q),
            cam_from_imu_trans: [0.0, 0.05, -0.1],
            camera_rate: 20.0,
            imu_rate: 200.0,
            pixel_sigma: 1.0,
            gyro_sigma: 1e-3,
            accel_sigma: 1e-2,
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl SensorRig {
    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidConfig(
                "rig.intrinsics: fx and fy must be > 0".into(),
            ));
        }
        if !(k.width > 0.0 && k.height > 0.0) {
            return Err(Error::InvalidConfig(
                "rig.intrinsics: image bounds must be > 0".into(),
            ));
        }
        if !(self.camera_rate > 0.0 && self.imu_rate > self.camera_rate) {
            return Err(Error::InvalidConfig(
                "rig: camera_rate must be > 0 and below imu_rate".into(),
            ));
        }
        if self.pixel_sigma < 0.0 || self.gyro_sigma < 0.0 || self.accel_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "rig: noise sigmas must be >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// Camera-from-IMU transform.
    pub fn cam_from_imu(&self) -> Pose {
        Pose::new(
            self.cam_from_imu_rot.to_unit(),
            Vector3::from(self.cam_from_imu_trans),
        )
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.camera_rate
    }

    /// Camera-from-world transform for a world-from-body pose.
    pub fn camera_from_world(&self, world_from_body: &Pose) -> Pose {
        self.cam_from_imu().compose(&world_from_body.inverse())
    }

    pub fn with_noise(mut self, pixel: f64, gyro: f64, accel: f64) -> Self {
        self.pixel_sigma = pixel;
        self.gyro_sigma = gyro;
        self.accel_sigma = accel;
        self
    }
}

/// Projects a world landmark through a camera-from-world pose. Returns `None`
/// when the point is behind the near plane or outside the image.
pub fn project(
    camera_from_world: &Pose,
    landmark: &Vector3<f64>,
    intrinsics: &Intrinsics,
) -> Option<Vector2<f64>> {
    project_camera_point(&camera_from_world.transform(landmark), intrinsics)
}

pub fn project_camera_point(p: &Vector3<f64>, intrinsics: &Intrinsics) -> Option<Vector2<f64>> {
    if p.z <= NEAR_PLANE {
        return None;
    }
    let px = intrinsics.project_raw(p);
    intrinsics.in_bounds(&px).then_some(px)
}

/// Exact image-plane velocity of a static landmark, pixels/s, obtained by the
/// chain rule through the analytic trajectory derivatives.
pub fn true_feature_velocity(
    traj: &Trajectory,
    rig: &SensorRig,
    landmark: &Vector3<f64>,
    t: f64,
) -> Result<Vector2<f64>> {
    let body = traj.pose(t);
    let cam_imu = rig.cam_from_imu();
    let p_body = body.rot.inverse() * (landmark - body.trans);
    let p_cam = cam_imu.transform(&p_body);
    if project_camera_point(&p_cam, &rig.intrinsics).is_none() {
        return Err(Error::LandmarkOutOfView);
    }
    let omega = traj.angular_velocity(t);
    let v_world = traj.velocity(t);
    let dp_body = -omega.cross(&p_body) - body.rot.inverse() * v_world;
    let dp_cam = cam_imu.rot * dp_body;
    Ok(rig.intrinsics.project_jacobian(&p_cam) * dp_cam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::{make_trajectory, Profile, ProfileParams};

    fn unit_intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let px = project(
            &Pose::identity(),
            &Vector3::new(0.0, 0.0, 1.0),
            &unit_intrinsics(),
        );
        assert_eq!(px, Some(Vector2::new(0.0, 0.0)));
    }

    #[test]
    fn pinhole_arithmetic() {
        let k = SensorRig::default().intrinsics;
        let px = project(&Pose::identity(), &Vector3::new(0.5, 0.0, 1.0), &k).unwrap();
        assert_eq!(px.x, 520.0);
    }

    #[test]
    fn behind_camera_is_out_of_view() {
        let k = SensorRig::default().intrinsics;
        assert!(project(&Pose::identity(), &Vector3::new(0.0, 0.0, -1.0), &k).is_none());
        assert!(project(&Pose::identity(), &Vector3::new(0.0, 0.0, 0.05), &k).is_none());
    }

    #[test]
    fn default_camera_looks_along_body_x() {
        let rig = SensorRig::default();
        let c = rig.cam_from_imu().rot * Vector3::x();
        assert!((c - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn static_trajectory_has_zero_feature_velocity() {
        let traj = make_trajectory(Profile::Circle, ProfileParams::new(1.0, 0.0, 5.0)).unwrap();
        let rig = SensorRig::default();
        let body = traj.pose(1.0);
        let lm = body.transform(&Vector3::new(5.0, 0.3, -0.2));
        let v = true_feature_velocity(&traj, &rig, &lm, 1.0).unwrap();
        assert_eq!(v, Vector2::zeros());
    }

    #[test]
    fn out_of_view_feature_velocity_errors() {
        let traj = make_trajectory(Profile::Circle, ProfileParams::new(1.0, 0.0, 5.0)).unwrap();
        let rig = SensorRig::default();
        let body = traj.pose(1.0);
        let lm = body.transform(&Vector3::new(-5.0, 0.0, 0.0));
        assert!(matches!(
            true_feature_velocity(&traj, &rig, &lm, 1.0),
            Err(Error::LandmarkOutOfView)
        ));
    }
}
