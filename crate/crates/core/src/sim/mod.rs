//! Ground-truth simulator: analytic trajectories, IMU sampling, pinhole
//! projection and offset injection.

pub mod dataset;
pub mod io;
pub mod offset;
pub mod rig;
pub mod trajectory;

pub use dataset::{
    generate_dataset, sample_imu, simulate, Frame, ImuSample, LandmarkConfig, SimConfig, SimDataset,
};
pub use offset::{evolve_offset, OffsetModel};
pub use rig::{
    project, project_camera_point, true_feature_velocity, Intrinsics, SensorRig, NEAR_PLANE,
};
pub use trajectory::{make_trajectory, Profile, ProfileParams, Trajectory};
