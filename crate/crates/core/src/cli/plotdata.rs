//! Plot-ready series from a run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::metrics::{rigid_alignment, Alignment, MetricsReport};
use crate::numfmt::exact;

use super::commands::{APE_FILE, METRICS_FILE, TPE_FILE, TRAJECTORY_FILE, WINDOWS_FILE};

pub const TRAJ_XY_FILE: &str = "traj_xy.csv";
pub const TD_ERROR_FILE: &str = "td_error_vs_time.csv";
pub const APE_TIME_FILE: &str = "ape_vs_time.csv";
pub const TPE_TIME_FILE: &str = "tpe_vs_time.csv";

/// Estimated positions are rigidly aligned when the run's metrics were.
pub const TRAJ_XY_HEADER: [&str; 6] = ["frame", "time", "est_x", "est_y", "true_x", "true_y"];
/// `time` is the stamp of the window's last frame.
pub const TD_ERROR_HEADER: [&str; 6] = [
    "window",
    "time",
    "td_est",
    "td_true",
    "td_error",
    "divergence_flag",
];
pub const APE_TIME_HEADER: [&str; 4] = ["frame", "time", "ape", "are_deg"];
pub const TPE_TIME_HEADER: [&str; 7] = [
    "window", "time", "tpe_x", "tpe_y", "tpe_z", "tpe_norm", "td_error",
];

/// A CSV file held as columns of strings.
struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: PathBuf) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInputFile(path));
        }
        let mut r = csv::Reader::from_path(&path)?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self {
            path,
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: no column `{name}`", self.path.display())))
    }

    fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row[c].parse().map_err(|_| {
                    Error::Parse(format!(
                        "{} row {}: bad `{name}` value {:?}",
                        self.path.display(),
                        i + 1,
                        row[c]
                    ))
                })
            })
            .collect()
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.f64s(name)?.into_iter().map(|x| x as usize).collect())
    }
}

fn write(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a run directory and writes `traj_xy.csv`, `td_error_vs_time.csv`,
/// `ape_vs_time.csv` and `tpe_vs_time.csv` into `out` (default: the run
/// directory). Row counts follow the source series.
pub fn cmd_plotdata(run: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let out = out.unwrap_or(run);
    let metrics_path = run.join(METRICS_FILE);
    if !metrics_path.exists() {
        return Err(Error::MissingInputFile(metrics_path));
    }
    let windows = Table::read(run.join(WINDOWS_FILE))?;
    let traj = Table::read(run.join(TRAJECTORY_FILE))?;
    let tpe = Table::read(run.join(TPE_FILE))?;
    let ape = Table::read(run.join(APE_FILE))?;
    let report: MetricsReport = serde_json::from_str(&std::fs::read_to_string(&metrics_path)?)?;
    std::fs::create_dir_all(out)?;

    let frames = traj.indices("frame")?;
    let stamps = traj.f64s("stamp")?;
    let time_of: BTreeMap<usize, f64> =
        frames.iter().copied().zip(stamps.iter().copied()).collect();
    let lookup = |frame: usize| {
        time_of.get(&frame).copied().ok_or_else(|| {
            Error::IndexMismatch(format!("frame {frame} missing from {TRAJECTORY_FILE}"))
        })
    };

    let xyz = |p: &str| -> Result<Vec<Vector3<f64>>> {
        let (x, y, z) = (
            traj.f64s(&format!("{p}_x"))?,
            traj.f64s(&format!("{p}_y"))?,
            traj.f64s(&format!("{p}_z"))?,
        );
        Ok((0..x.len())
            .map(|i| Vector3::new(x[i], y[i], z[i]))
            .collect())
    };
    let (mut est, truth) = (xyz("est")?, xyz("true")?);
    if report.alignment == Alignment::Rigid && !report.alignment_fallback {
        if let Some(t) = rigid_alignment(&est, &truth) {
            est = est.iter().map(|p| t.transform(p)).collect();
        }
    }
    let traj_xy = (0..frames.len()).map(|i| {
        vec![
            frames[i].to_string(),
            exact(stamps[i]),
            exact(est[i].x),
            exact(est[i].y),
            exact(truth[i].x),
            exact(truth[i].y),
        ]
    });
    write(&out.join(TRAJ_XY_FILE), &TRAJ_XY_HEADER, traj_xy)?;

    let w_index = windows.indices("window")?;
    let w_last = windows.indices("last_frame")?;
    let td_est = windows.f64s("td_est")?;
    let td_true = windows.f64s("td_true_mean")?;
    let flag = windows.col("divergence_flag")?;
    let mut window_time = BTreeMap::new();
    let mut rows = Vec::with_capacity(w_index.len());
    for i in 0..w_index.len() {
        let t = lookup(w_last[i])?;
        window_time.insert(w_index[i], t);
        rows.push(vec![
            w_index[i].to_string(),
            exact(t),
            exact(td_est[i]),
            exact(td_true[i]),
            exact(td_est[i] - td_true[i]),
            windows.rows[i][flag].clone(),
        ]);
    }
    write(&out.join(TD_ERROR_FILE), &TD_ERROR_HEADER, rows)?;

    let a_frame = ape.indices("frame")?;
    let (a_ape, a_are) = (ape.f64s("ape")?, ape.f64s("are_deg")?);
    let rows = (0..a_frame.len())
        .map(|i| {
            Ok(vec![
                a_frame[i].to_string(),
                exact(lookup(a_frame[i])?),
                exact(a_ape[i]),
                exact(a_are[i]),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write(&out.join(APE_TIME_FILE), &APE_TIME_HEADER, rows)?;

    let t_window = tpe.indices("window")?;
    let cols = ["tpe_x", "tpe_y", "tpe_z", "tpe_norm", "td_est", "td_true"]
        .map(|c| tpe.f64s(c))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..t_window.len())
        .map(|i| {
            let t = window_time.get(&t_window[i]).copied().ok_or_else(|| {
                Error::IndexMismatch(format!(
                    "window {} missing from {WINDOWS_FILE}",
                    t_window[i]
                ))
            })?;
            let mut row = vec![t_window[i].to_string(), exact(t)];
            row.extend(cols[..4].iter().map(|c| exact(c[i])));
            row.push(exact(cols[4][i] - cols[5][i]));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write(&out.join(TPE_TIME_FILE), &TPE_TIME_HEADER, rows)?;

    Ok([TRAJ_XY_FILE, TD_ERROR_FILE, APE_TIME_FILE, TPE_TIME_FILE]
        .iter()
        .map(|f| out.join(f))
        .collect())
}
