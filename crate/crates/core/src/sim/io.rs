//! Dataset directory format: `meta.json`, `imu.csv`, `frames.csv`,
//! `landmarks.csv`. Floats are written with twelve significant digits.

use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::numfmt::g12;

use super::dataset::{Frame, ImuSample, SimConfig, SimDataset};
use super::trajectory::make_trajectory;

pub const META_FILE: &str = "meta.json";
pub const IMU_FILE: &str = "imu.csv";
pub const FRAMES_FILE: &str = "frames.csv";
pub const LANDMARKS_FILE: &str = "landmarks.csv";

pub fn write_dataset(ds: &SimDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = serde_json::to_string_pretty(&ds.config)?;
    fs::write(dir.join(META_FILE), meta + "\n")?;

    let mut w = csv::Writer::from_path(dir.join(IMU_FILE))?;
    w.write_record(["t", "wx", "wy", "wz", "ax", "ay", "az"])?;
    for s in &ds.imu {
        w.write_record([
            g12(s.t),
            g12(s.gyro.x),
            g12(s.gyro.y),
            g12(s.gyro.z),
            g12(s.accel.x),
            g12(s.accel.y),
            g12(s.accel.z),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(FRAMES_FILE))?;
    w.write_record([
        "k", "stamp", "true_t", "td_true", "qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy",
        "vz",
    ])?;
    for f in &ds.frames {
        let q = f.pose.rot;
        w.write_record([
            f.index.to_string(),
            g12(f.stamp),
            g12(f.true_time),
            g12(f.td_true),
            g12(q.w),
            g12(q.i),
            g12(q.j),
            g12(q.k),
            g12(f.pose.trans.x),
            g12(f.pose.trans.y),
            g12(f.pose.trans.z),
            g12(f.velocity.x),
            g12(f.velocity.y),
            g12(f.velocity.z),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(LANDMARKS_FILE))?;
    w.write_record(["id", "x", "y", "z"])?;
    for (i, p) in ds.landmarks.iter().enumerate() {
        w.write_record([i.to_string(), g12(p.x), g12(p.y), g12(p.z)])?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(Error::MissingInputFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "{}: expected {width} columns, got {}",
                path.display(),
                rec.len()
            )));
        }
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: {s:?}: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a dataset directory. The trajectory is rebuilt from `meta.json`;
/// samples and frames come from the CSVs at their printed precision.
pub fn read_dataset(dir: &Path) -> Result<SimDataset> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Error::MissingInputFile(meta_path));
    }
    let config: SimConfig = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let trajectory = make_trajectory(config.profile, config.params)?;
    let imu = read_rows(&dir.join(IMU_FILE), 7)?
        .into_iter()
        .map(|r| ImuSample {
            t: r[0],
            gyro: Vector3::new(r[1], r[2], r[3]),
            accel: Vector3::new(r[4], r[5], r[6]),
        })
        .collect();
    let frames = read_rows(&dir.join(FRAMES_FILE), 14)?
        .into_iter()
        .map(|r| Frame {
            index: r[0] as usize,
            stamp: r[1],
            true_time: r[2],
            td_true: r[3],
            pose: Pose::new(
                UnitQuaternion::from_quaternion(Quaternion::new(r[4], r[5], r[6], r[7])),
                Vector3::new(r[8], r[9], r[10]),
            ),
            velocity: Vector3::new(r[11], r[12], r[13]),
        })
        .collect();
    let landmarks = read_rows(&dir.join(LANDMARKS_FILE), 4)?
        .into_iter()
        .map(|r| Vector3::new(r[1], r[2], r[3]))
        .collect();
    Ok(SimDataset {
        config,
        trajectory,
        landmarks,
        imu,
        frames,
    })
}
