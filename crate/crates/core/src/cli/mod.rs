//! Config-driven experiment runner: simulation, single runs, sweeps,
//! plot-ready series and the gradient suite.

mod args;
mod commands;
mod config;
mod plotdata;

pub use args::{execute, Cli, Command, LOG_ENV};
pub use commands::{
    cell_name, cmd_grad_check, cmd_run, cmd_simulate, cmd_sweep, SweepRow, APE_FILE, METRICS_FILE,
    SUMMARY_FILE, SUMMARY_HEADER, TPE_FILE, TRAJECTORY_FILE, TRAJECTORY_HEADER, WINDOWS_FILE,
};
pub use config::{ExperimentConfig, SweepConfig, CONFIG_VERSION};
pub use plotdata::{
    cmd_plotdata, APE_TIME_FILE, APE_TIME_HEADER, TD_ERROR_FILE, TD_ERROR_HEADER, TPE_TIME_FILE,
    TPE_TIME_HEADER, TRAJ_XY_FILE, TRAJ_XY_HEADER,
};
