//! Metrics over pipeline outputs and their JSON/CSV artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{FrameEstimate, PipelineOutput, Variant};
use crate::geometry::Pose;
use crate::numfmt::exact;
use crate::sim::SimDataset;

use super::ate::{ate, Alignment, AteResult, TrajectoryEstimate, TrajectorySample};
use super::offset::{cit, tpe, CitConfig, OffsetSeries, TpeResult};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub cit: CitConfig,
    pub align: Alignment,
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        self.cit.validate()
    }
}

/// Summary written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: Variant,
    /// Window position of convergence; absent when not converged.
    pub cit: Option<usize>,
    /// Offset error RMSE over windows, seconds.
    pub td_rmse: f64,
    pub tpe_rmse: f64,
    pub ape_rmse: f64,
    pub are_rmse: f64,
    pub alignment: Alignment,
    pub alignment_fallback: bool,
    pub windows: usize,
    pub frames: usize,
    pub diverged_windows: usize,
    /// Echo of the configuration that produced the run.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub offsets: OffsetSeries,
    pub tpe: TpeResult,
    pub ate: AteResult,
}

/// Final frame estimates paired with ground truth at their stamps.
pub fn frame_trajectory(ds: &SimDataset, frames: &[FrameEstimate]) -> Result<TrajectoryEstimate> {
    TrajectoryEstimate::new(
        frames
            .iter()
            .map(|f| TrajectorySample {
                index: f.frame,
                est: Pose::new(f.rot, f.pos),
                vel: f.vel,
                truth: ds.pose_at_stamp(f.frame),
                truth_vel: ds.velocity_at_stamp(f.frame),
            })
            .collect(),
    )
}

/// One sample per window at its last frame, carrying the velocity the
/// window itself estimated.
pub fn window_trajectory(ds: &SimDataset, out: &PipelineOutput) -> Result<TrajectoryEstimate> {
    let mut samples = Vec::with_capacity(out.records.len());
    for r in &out.records {
        let f = out
            .frames
            .iter()
            .find(|f| f.frame == r.last_frame)
            .ok_or_else(|| {
                Error::IndexMismatch(format!("no estimate for frame {}", r.last_frame))
            })?;
        samples.push(TrajectorySample {
            index: r.index,
            est: Pose::new(f.rot, f.pos),
            vel: r.velocity,
            truth: ds.pose_at_stamp(r.last_frame),
            truth_vel: ds.velocity_at_stamp(r.last_frame),
        });
    }
    TrajectoryEstimate::new(samples)
}

pub fn evaluate(
    ds: &SimDataset,
    out: &PipelineOutput,
    config: &MetricsConfig,
    echo: serde_json::Value,
) -> Result<Evaluation> {
    config.validate()?;
    let offsets = OffsetSeries::from_records(&out.records)?;
    let tpe = tpe(&offsets, &window_trajectory(ds, out)?)?;
    let ate = ate(&frame_trajectory(ds, &out.frames)?, config.align);
    let report = MetricsReport {
        variant: out.variant,
        cit: cit(&offsets, &config.cit),
        td_rmse: offsets.rmse(),
        tpe_rmse: tpe.rmse,
        ape_rmse: ate.ape_rmse,
        are_rmse: ate.are_rmse,
        alignment: ate.alignment,
        alignment_fallback: ate.alignment_fallback,
        windows: out.records.len(),
        frames: out.frames.len(),
        diverged_windows: out
            .records
            .iter()
            .filter(|r| r.diverged || r.failure.is_some())
            .count(),
        config: echo,
    };
    Ok(Evaluation {
        report,
        offsets,
        tpe,
        ate,
    })
}

pub const TPE_HEADER: [&str; 7] = [
    "window", "td_est", "td_true", "tpe_x", "tpe_y", "tpe_z", "tpe_norm",
];
pub const APE_HEADER: [&str; 3] = ["frame", "ape", "are_deg"];

/// Writes `metrics.json`, `tpe.csv` and `ape.csv` into `dir`.
pub fn write_metrics(dir: &Path, eval: &Evaluation) -> Result<()> {
    let json = serde_json::to_string_pretty(&eval.report)?;
    std::fs::write(dir.join("metrics.json"), json + "\n")?;

    let mut w = csv::Writer::from_path(dir.join("tpe.csv"))?;
    w.write_record(TPE_HEADER)?;
    for (o, e) in eval.offsets.samples().iter().zip(&eval.tpe.error) {
        w.write_record([
            o.index.to_string(),
            exact(o.estimate),
            exact(o.truth),
            exact(e.x),
            exact(e.y),
            exact(e.z),
            exact(e.norm()),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("ape.csv"))?;
    w.write_record(APE_HEADER)?;
    for ((i, a), r) in eval.ate.index.iter().zip(&eval.ate.ape).zip(&eval.ate.are) {
        w.write_record([i.to_string(), exact(*a), exact(*r)])?;
    }
    w.flush()?;
    Ok(())
}
