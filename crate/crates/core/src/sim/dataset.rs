//! Synchronized ground truth with an injected camera-IMU offset.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

use super::offset::{evolve_offset, OffsetModel};
use super::rig::SensorRig;
use super::trajectory::{make_trajectory, Profile, ProfileParams, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkConfig {
    pub count: usize,
    /// Horizontal margin added around the trajectory's bounding box, meters.
    pub margin: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Minimum horizontal distance between a landmark and the path, meters.
    pub clearance: f64,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        Self {
            count: 1500,
            margin: 10.0,
            z_min: -1.0,
            z_max: 4.0,
            clearance: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub profile: Profile,
    pub params: ProfileParams,
    #[serde(default)]
    pub rig: SensorRig,
    pub offset: OffsetModel,
    #[serde(default)]
    pub landmarks: LandmarkConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        self.offset.validate()?;
        if self.landmarks.count < 50 {
            return Err(Error::InvalidConfig(format!(
                "landmarks.count must be >= 50, got {}",
                self.landmarks.count
            )));
        }
        if !(self.landmarks.z_max > self.landmarks.z_min) {
            return Err(Error::InvalidConfig(
                "landmarks: z_max must exceed z_min".into(),
            ));
        }
        if self.landmarks.margin < 0.0 || self.landmarks.clearance < 0.0 {
            return Err(Error::InvalidConfig(
                "landmarks: margin and clearance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Timestamp reported on the IMU clock.
    pub stamp: f64,
    /// Instant the image was actually sampled: `stamp + td_true`.
    pub true_time: f64,
    pub td_true: f64,
    /// World-from-body pose at `true_time`.
    pub pose: Pose,
    /// World-frame body velocity at `true_time`, m/s.
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub config: SimConfig,
    pub trajectory: Trajectory,
    pub landmarks: Vec<Vector3<f64>>,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<Frame>,
}

impl SimDataset {
    pub fn rig(&self) -> &SensorRig {
        &self.config.rig
    }

    /// Ground-truth body pose at a frame's reported stamp, which is the
    /// instant the estimator's frame state refers to.
    pub fn pose_at_stamp(&self, frame: usize) -> Pose {
        self.trajectory.pose(self.frames[frame].stamp)
    }

    pub fn velocity_at_stamp(&self, frame: usize) -> Vector3<f64> {
        self.trajectory.velocity(self.frames[frame].stamp)
    }
}

/// Noisy body-frame gyro and accelerometer readings at time `t`.
pub fn sample_imu<R: Rng + ?Sized>(
    traj: &Trajectory,
    rig: &SensorRig,
    t: f64,
    rng: &mut R,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let duration = traj.duration();
    if !(0.0..=duration + 1e-9).contains(&t) {
        return Err(Error::OutOfRangeTime { t, duration });
    }
    let r = traj.rotation_matrix(t);
    let mut gyro = traj.angular_velocity(t);
    let mut accel = r.transpose() * (traj.acceleration(t) - rig.gravity());
    if rig.gyro_sigma > 0.0 {
        let n = Normal::new(0.0, rig.gyro_sigma).expect("validated sigma");
        gyro += Vector3::from_fn(|_, _| n.sample(rng));
    }
    if rig.accel_sigma > 0.0 {
        let n = Normal::new(0.0, rig.accel_sigma).expect("validated sigma");
        accel += Vector3::from_fn(|_, _| n.sample(rng));
    }
    Ok((gyro, accel))
}

fn generate_landmarks<R: Rng + ?Sized>(
    traj: &Trajectory,
    cfg: &LandmarkConfig,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    let n_path = (traj.duration() * 10.0).ceil() as usize + 1;
    let path: Vec<Vector3<f64>> = (0..n_path)
        .map(|i| traj.position((i as f64 * 0.1).min(traj.duration())))
        .collect();
    let (mut lo, mut hi) = (path[0], path[0]);
    for p in &path {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let (x0, x1) = (lo.x - cfg.margin, hi.x + cfg.margin);
    let (y0, y1) = (lo.y - cfg.margin, hi.y + cfg.margin);
    let clear2 = cfg.clearance * cfg.clearance;
    let mut out = Vec::with_capacity(cfg.count);
    let mut attempts = 0usize;
    while out.len() < cfg.count {
        attempts += 1;
        let p = Vector3::new(
            rng.random_range(x0..=x1),
            rng.random_range(y0..=y1),
            rng.random_range(cfg.z_min..=cfg.z_max),
        );
        // Give up on clearance if the box is too crowded to satisfy it.
        let crowded = attempts > 200 * cfg.count;
        if crowded
            || path
                .iter()
                .all(|q| (p.x - q.x).powi(2) + (p.y - q.y).powi(2) >= clear2)
        {
            out.push(p);
        }
    }
    out
}

/// Generates a dataset: landmarks and IMU from `rng`, the offset sequence
/// from its own stream seeded by `offset.seed`.
pub fn generate_dataset<R: Rng + ?Sized>(
    traj: &Trajectory,
    rig: &SensorRig,
    offset: &OffsetModel,
    landmark_cfg: &LandmarkConfig,
    rng: &mut R,
    config: SimConfig,
) -> Result<SimDataset> {
    rig.validate()?;
    offset.validate()?;
    let landmarks = generate_landmarks(traj, landmark_cfg, rng);

    let duration = traj.duration();
    let n_imu = (duration * rig.imu_rate + 1e-9).floor() as usize + 1;
    let mut imu = Vec::with_capacity(n_imu);
    for i in 0..n_imu {
        let t = i as f64 / rig.imu_rate;
        let (gyro, accel) = sample_imu(traj, rig, t, rng)?;
        imu.push(ImuSample { t, gyro, accel });
    }

    let n_frames = (duration * rig.camera_rate + 1e-9).floor() as usize;
    let limit = 0.5 / rig.camera_rate;
    let mut offset_rng = ChaCha8Rng::seed_from_u64(offset.seed);
    let mut frames = Vec::with_capacity(n_frames);
    let mut td = offset.initial;
    for k in 0..n_frames {
        if k > 0 {
            let next = evolve_offset(td, offset, rig.camera_rate, &mut offset_rng);
            let step = next - td;
            if step.abs() > limit {
                return Err(Error::FrameReordering {
                    frame: k,
                    step,
                    limit,
                });
            }
            td = next;
        }
        let stamp = k as f64 / rig.camera_rate;
        let true_time = stamp + td;
        frames.push(Frame {
            index: k,
            stamp,
            true_time,
            td_true: td,
            pose: traj.pose(true_time),
            velocity: traj.velocity(true_time),
        });
    }
    Ok(SimDataset {
        config,
        trajectory: traj.clone(),
        landmarks,
        imu,
        frames,
    })
}

/// Builds the trajectory from `config` and generates the dataset with a
/// ChaCha stream seeded from `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let traj = make_trajectory(config.profile, config.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    generate_dataset(
        &traj,
        &config.rig,
        &config.offset,
        &config.landmarks,
        &mut rng,
        config.clone(),
    )
}

impl SimConfig {
    pub fn new(profile: Profile, params: ProfileParams, offset: OffsetModel, seed: u64) -> Self {
        Self {
            profile,
            params,
            rig: SensorRig::default(),
            offset,
            landmarks: LandmarkConfig::default(),
            seed,
        }
    }
}
