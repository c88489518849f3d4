//! Sliding-window estimation of poses, velocities, points and the
//! camera-IMU time offset, with learned feature velocities and offset
//! priors.

mod imu;
mod pipeline;
mod prior;
mod solver;
mod state;
mod visual;

pub use imu::{preintegrate_imu, ImuFactor, ImuJacobian, Matrix9, Preintegration, Vector9};
pub use pipeline::{
    run_pipeline, run_sir_baseline, run_ton_pipeline, triangulate, write_windows_csv,
    EstimatorConfig, FrameEstimate, NetsConfig, PipelineOutput, UntrackedPolicy, Variant,
    VelocityRecord, WindowRecord, WINDOWS_HEADER,
};
pub use prior::{
    ekf_propagate_td, ekf_update_td, FilterPropagation, PriorKind, TdPrior, TpnLabelBuffer,
    TPN_BUFFER_CAPACITY,
};
pub use solver::{
    camera_point, solve_window, td_information, td_noise_information, Problem, SolveResult,
    SolverConfig,
};
pub use state::{FrameState, WindowState};
pub use visual::{
    shift_observation, visual_residual, VelocityNoise, VelocitySource, VisualEval, VisualFactor,
};
