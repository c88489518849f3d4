//! Evaluation metrics: convergence iterations of the offset, positioning
//! error induced by offset error, and absolute trajectory error.

pub mod ate;
pub mod offset;
pub mod report;

pub use ate::{ate, rigid_alignment, Alignment, AteResult, TrajectoryEstimate, TrajectorySample};
pub use offset::{cit, tpe, CitConfig, OffsetSample, OffsetSeries, TpeResult};
pub use report::{
    evaluate, frame_trajectory, window_trajectory, write_metrics, Evaluation, MetricsConfig,
    MetricsReport, APE_HEADER, TPE_HEADER,
};
