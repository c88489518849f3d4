use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile parameter: {0}")]
    InvalidProfileParameter(String),

    #[error("time {t} s is outside the trajectory range [0, {duration}] s")]
    OutOfRangeTime { t: f64, duration: f64 },

    #[error("landmark is out of view")]
    LandmarkOutOfView,

    #[error(
        "frame reordering at frame {frame}: offset step {step} s exceeds half the frame interval ({limit} s)"
    )]
    FrameReordering { frame: usize, step: f64, limit: f64 },

    #[error("degenerate timestamps: frames {prev} and {next} share stamp {stamp}")]
    DegenerateTimestamps {
        prev: usize,
        next: usize,
        stamp: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty label set")]
    EmptyLabelSet,

    #[error("no IMU samples cover the interval [{t0}, {t1}]")]
    EmptyInterval { t0: f64, t1: f64 },

    #[error("insufficient factors: {frames} frames, {visual} active visual factors")]
    InsufficientFactors { frames: usize, visual: usize },

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("series needs at least {needed} entries, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing input file: {}", .0.display())]
    MissingInputFile(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
