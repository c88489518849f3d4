//! Subcommand implementations. Every artifact is a pure function of the
//! configuration, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{run_pipeline, write_windows_csv, PipelineOutput, Variant};
use crate::gradcheck::{gradient_suite, CheckResult};
use crate::metrics::{evaluate, write_metrics, MetricsReport};
use crate::numfmt::exact;
use crate::sim::io::write_dataset;
use crate::sim::SimDataset;

use super::config::ExperimentConfig;

pub const WINDOWS_FILE: &str = "windows.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TPE_FILE: &str = "tpe.csv";
pub const APE_FILE: &str = "ape.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const TRAJECTORY_HEADER: [&str; 16] = [
    "frame", "stamp", "est_x", "est_y", "est_z", "est_qw", "est_qx", "est_qy", "est_qz", "true_x",
    "true_y", "true_z", "true_qw", "true_qx", "true_qy", "true_qz",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "variant",
    "offset",
    "drift",
    "seed",
    "cit",
    "td_rmse",
    "tpe_rmse",
    "ape_rmse",
    "are_rmse",
    "windows",
    "diverged_windows",
    "status",
    "error",
];

fn out_dir(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set `out`".into()))
}

/// Simulates the configured dataset into the output directory.
pub fn cmd_simulate(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out_dir(config, out)?;
    let ds = crate::sim::simulate(&config.sim_config())?;
    write_dataset(&ds, &dir)?;
    log::info!("wrote {} frames to {}", ds.frames.len(), dir.display());
    Ok(dir)
}

fn write_trajectory(ds: &SimDataset, out: &PipelineOutput, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for f in &out.frames {
        let truth = ds.pose_at_stamp(f.frame);
        let (q, t) = (f.rot.quaternion(), truth.rot.quaternion());
        let mut row = vec![f.frame.to_string(), exact(f.stamp)];
        row.extend([f.pos.x, f.pos.y, f.pos.z, q.w, q.i, q.j, q.k].map(exact));
        row.extend(
            [
                truth.trans.x,
                truth.trans.y,
                truth.trans.z,
                t.w,
                t.i,
                t.j,
                t.k,
            ]
            .map(exact),
        );
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the configured variant end to end and writes `windows.csv`,
/// `trajectory.csv`, `metrics.json`, `tpe.csv` and `ape.csv`. Diverged
/// windows are flagged in the outputs, not raised.
pub fn cmd_run(config: &ExperimentConfig, out: Option<&Path>) -> Result<MetricsReport> {
    let dir = out_dir(config, out)?;
    fs::create_dir_all(&dir)?;
    let ds = config.dataset()?;
    let tracks = config.tracks(&ds);
    let output = run_pipeline(&ds, &tracks, config.variant, &config.estimator)?;
    write_windows_csv(&output.records, &dir.join(WINDOWS_FILE))?;
    write_trajectory(&ds, &output, &dir.join(TRAJECTORY_FILE))?;
    let eval = evaluate(&ds, &output, &config.metrics, config.echo()?)?;
    write_metrics(&dir, &eval)?;
    log::info!(
        "{}: {} windows, cit {:?}, td rmse {:.3} ms, ape {:.3} m",
        config.variant,
        eval.report.windows,
        eval.report.cit,
        eval.report.td_rmse * 1e3,
        eval.report.ape_rmse
    );
    Ok(eval.report)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub offset: f64,
    pub drift: f64,
    pub seed: u64,
    /// `None` when the run failed.
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        match &self.report {
            None => "error",
            Some(r) if r.diverged_windows > 0 => "diverged",
            Some(_) => "ok",
        }
    }

    fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(exact).unwrap_or_default();
        let r = self.report.as_ref();
        vec![
            self.variant.to_string(),
            exact(self.offset),
            exact(self.drift),
            self.seed.to_string(),
            r.and_then(|r| r.cit)
                .map(|c| c.to_string())
                .unwrap_or_default(),
            opt(r.map(|r| r.td_rmse)),
            opt(r.map(|r| r.tpe_rmse)),
            opt(r.map(|r| r.ape_rmse)),
            opt(r.map(|r| r.are_rmse)),
            r.map(|r| r.windows.to_string()).unwrap_or_default(),
            r.map(|r| r.diverged_windows.to_string())
                .unwrap_or_default(),
            self.status().to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Directory name of a sweep cell.
pub fn cell_name(variant: Variant, offset: f64, drift: f64, seed: u64) -> String {
    format!(
        "{variant}_td{:+.3}ms_drift{:.4}ms-s_seed{seed}",
        offset * 1e3,
        drift * 1e3
    )
}

/// Runs the sweep's offsets x drifts x seeds x variants, each cell in its
/// own subdirectory, on at most `jobs` threads. Failed cells are recorded
/// in their rows and do not stop the sweep.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    out: Option<&Path>,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let sweep = &config.sweep;
    sweep.validate()?;
    let dir = out_dir(config, out)?;
    fs::create_dir_all(&dir)?;
    let drifts = if sweep.drifts.is_empty() {
        vec![config.offset.drift_per_second]
    } else {
        sweep.drifts.clone()
    };
    let mut cells = Vec::new();
    for &offset in &sweep.offsets {
        for &drift in &drifts {
            for &seed in &sweep.seeds {
                for &variant in &sweep.variants {
                    cells.push((variant, offset, drift, seed));
                }
            }
        }
    }
    let run_cell = |&(variant, offset, drift, seed): &(Variant, f64, f64, u64)| {
        let mut cell = config.clone();
        cell.variant = variant;
        cell.offset.initial = offset;
        cell.offset.drift_per_second = drift;
        cell.seed = seed;
        cell.out = None;
        let cell_dir = dir
            .join("cells")
            .join(cell_name(variant, offset, drift, seed));
        let result = cell
            .validate()
            .and_then(|_| cmd_run(&cell, Some(&cell_dir)));
        if let Err(e) = &result {
            log::error!("{}: {e}", cell_dir.display());
        }
        let (report, error) = match result {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        SweepRow {
            variant,
            offset,
            drift,
            seed,
            report,
            error,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("jobs: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut w = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    w.write_record(SUMMARY_HEADER)?;
    for row in &rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(rows)
}

/// Runs the gradient and Jacobian checks.
pub fn cmd_grad_check(seed: u64) -> Vec<CheckResult> {
    gradient_suite(seed)
}
