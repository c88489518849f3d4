#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ton_calib::cli::ExperimentConfig;
use ton_calib::estimator::{
    preintegrate_imu, solve_window, FrameState, ImuFactor, Problem, SolverConfig, VelocitySource,
    VisualFactor, WindowState,
};
use ton_calib::frontend::{constant_speed_velocity, track_features, DropoutModel};
use ton_calib::nets::{F2fFvon, ItsFvon, Tpn, TrainConfig};
use ton_calib::sim::{
    project, simulate, true_feature_velocity, OffsetModel, Profile, ProfileParams, SimConfig,
};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn canned(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name)).expect("canned config loads")
}

/// A short configuration that runs in well under a second.
pub fn quick_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "version": 1,
            "profile": "aggressive",
            "params": {"scale": 5.0, "rate": 0.7, "duration": 4.0},
            "offset": {"initial": 0.01},
            "seed": 2
        }"#,
    )
    .unwrap()
}

/// Solves one noiseless, dropout-free window whose visual factors carry
/// analytic feature velocities, with states and points at ground truth.
/// Returns the estimated offset.
pub fn exact_inversion(td: f64) -> f64 {
    let mut c = SimConfig::new(
        Profile::Aggressive,
        ProfileParams::new(5.0, 0.7, 4.0),
        OffsetModel::constant(td),
        1,
    );
    c.rig = c.rig.with_noise(0.0, 0.0, 0.0);
    let ds = simulate(&c).unwrap();
    let table = track_features(
        &ds,
        &DropoutModel::none(100),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let rig = ds.rig();
    let (start, end) = (20, 30);
    let frames = (start..end)
        .map(|k| {
            let p = ds.pose_at_stamp(k);
            FrameState {
                frame: k,
                rot: p.rot,
                pos: p.trans,
                vel: ds.velocity_at_stamp(k),
            }
        })
        .collect();
    let mut points = BTreeMap::new();
    let mut visual = Vec::new();
    for k in start..end {
        let f = &ds.frames[k];
        for &id in table.visible(k) {
            let t = table.track(id).unwrap();
            if (start..end).filter(|&j| t.contains(j)).count() < 2 {
                continue;
            }
            let lm = ds.landmarks[t.landmark];
            points.insert(id, lm);
            // The pixel shift over td is exactly the mean velocity over
            // [stamp, stamp + td], which the midpoint velocity matches to
            // second order.
            let Ok(v) = true_feature_velocity(&ds.trajectory, rig, &lm, f.stamp + 0.5 * f.td_true)
            else {
                continue;
            };
            visual.push(VisualFactor {
                feature: id,
                frame: k,
                pixel: t.observation_at(k).unwrap().pixel,
                velocity: v,
                source: VelocitySource::ConstantSpeed,
                sigma: 1.0,
                velocity_noise: None,
            });
        }
    }
    let cfg = SolverConfig {
        compensate_velocity_noise: false,
        ..SolverConfig::default()
    };
    let imu = (start..end - 1)
        .map(|k| {
            let pre = preintegrate_imu(
                &ds.imu,
                ds.frames[k].stamp,
                ds.frames[k + 1].stamp,
                0.0,
                0.0,
            )
            .unwrap();
            ImuFactor::new(k, k + 1, pre, cfg.imu_cov_floor)
        })
        .collect();
    let problem = Problem {
        visual,
        imu,
        td_prior: None,
        point_sigma: Default::default(),
    };
    let state = WindowState {
        frames,
        points,
        td: 0.0,
    };
    let res = solve_window(&problem, &state, rig, &cfg).unwrap();
    assert!(!res.diverged);
    res.state.td
}

/// Held-out comparison of the velocity networks at the frame with the most
/// newly detected features.
pub struct FvonValue {
    pub frame: usize,
    pub f2f_rmse: f64,
    pub zero_rmse: f64,
    pub its_wins: usize,
    pub its_total: usize,
}

/// Noise-free constant-speed velocity of a landmark at frame `k`.
fn clean_velocity(
    ds: &ton_calib::sim::SimDataset,
    lm: &nalgebra::Vector3<f64>,
    k: usize,
) -> Option<Vector2<f64>> {
    let rig = ds.rig();
    let px = |f: usize| {
        project(
            &rig.camera_from_world(&ds.frames[f].pose),
            lm,
            &rig.intrinsics,
        )
    };
    let (a, b) = (px(k - 1)?, px(k)?);
    Some((b - a) * rig.camera_rate)
}

pub fn fvon_value(seed: u64) -> FvonValue {
    fvon_value_with(seed, TrainConfig::its_default(), 5, 1.0)
}

pub fn fvon_value_with(
    seed: u64,
    its_cfg: TrainConfig,
    future: usize,
    pixel_sigma: f64,
) -> FvonValue {
    let mut c = SimConfig::new(
        Profile::Aggressive,
        ProfileParams::new(5.0, 0.7, 10.0),
        OffsetModel::constant(0.01),
        seed,
    );
    c.rig.pixel_sigma = pixel_sigma;
    let ds = simulate(&c).unwrap();
    let table = track_features(
        &ds,
        &DropoutModel::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let rig = ds.rig();
    let n = ds.frames.len();
    let frame = (10..n - 10)
        .max_by(|&a, &b| table.new_fraction(a).total_cmp(&table.new_fraction(b)))
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let held_out: std::collections::BTreeSet<_> = table
        .visible(frame)
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.3))
        .collect();
    let csv = |id, k| constant_speed_velocity(table.track(id).unwrap(), k).unwrap();

    // F2F: camera-frame points against well-matched velocities.
    let cam = rig.camera_from_world(&ds.frames[frame].pose);
    let mut labels = Vec::new();
    let mut queries = Vec::new();
    for &id in table.visible(frame) {
        let lm = ds.landmarks[table.track(id).unwrap().landmark];
        let p = cam.transform(&lm);
        if held_out.contains(&id) {
            if let Some(v) = clean_velocity(&ds, &lm, frame) {
                queries.push((p, v));
            }
        } else if let Some(v) = csv(id, frame) {
            labels.push((p, v));
        }
    }
    let mut f2f = F2fFvon::new(TrainConfig::f2f_default());
    f2f.fit(&labels).unwrap();
    let (mut se, mut se0) = (0.0, 0.0);
    for (p, v) in &queries {
        se += (f2f.predict(p).unwrap().value - v).norm_squared();
        se0 += v.norm_squared();
    }
    let m = queries.len().max(1) as f64;

    // ITS: at frames spread over the sequence, infer each held-out
    // feature's velocity from its future velocities.
    let (mut wins, mut total) = (0, 0);
    for k in (10..n - 2 * future).step_by(10) {
        let (w, t) = its_value(&ds, &table, k, future, its_cfg, &mut rng);
        wins += w;
        total += t;
    }
    FvonValue {
        frame,
        f2f_rmse: (se / m).sqrt(),
        zero_rmse: (se0 / m).sqrt(),
        its_wins: wins,
        its_total: total,
    }
}

fn its_value(
    ds: &ton_calib::sim::SimDataset,
    table: &ton_calib::frontend::TrackTable,
    frame: usize,
    future_len: usize,
    its_cfg: TrainConfig,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let csv = |id, k| constant_speed_velocity(table.track(id).unwrap(), k).unwrap();
    let mut runs = Vec::new();
    let mut held_out = Vec::new();
    for &id in table.visible(frame) {
        if rng.random_bool(0.3) {
            held_out.push(id);
            continue;
        }
        let run: Vec<_> = (frame.saturating_sub(4)..=frame + future_len)
            .filter_map(|k| csv(id, k))
            .collect();
        if run.len() >= 2 {
            runs.push(run);
        }
    }
    let mut its = ItsFvon::new(its_cfg);
    if runs.is_empty() {
        return (0, 0);
    }
    its.fit(&runs).unwrap();
    let (mut wins, mut total) = (0, 0);
    for id in held_out {
        let lm = ds.landmarks[table.track(id).unwrap().landmark];
        let future: Option<Vec<_>> = (frame + 1..=frame + future_len)
            .rev()
            .map(|k| csv(id, k))
            .collect();
        let (Some(future), Some(truth)) = (future, clean_velocity(ds, &lm, frame)) else {
            continue;
        };
        let pred = its.predict(&future).unwrap().value;
        let copy = *future.last().unwrap();
        total += 1;
        if (pred - truth).norm() < (copy - truth).norm() {
            wins += 1;
        }
    }
    (wins, total)
}

/// One-step prediction MSE of the offset network and of copy-last on a
/// drifting label sequence, trained online as the pipeline does.
pub fn tpn_value(drift_per_second: f64, window_period: f64, windows: usize) -> (f64, f64) {
    let labels: Vec<f64> = (0..windows)
        .map(|k| 0.01 + drift_per_second * window_period * k as f64)
        .collect();
    let mut tpn = Tpn::new(TrainConfig::tpn_default());
    let (mut se, mut se_copy, mut n) = (0.0, 0.0, 0);
    for k in 2..windows {
        let history = &labels[k.saturating_sub(30)..k];
        tpn.fit(history).unwrap();
        let pred = tpn.predict(history).unwrap().value;
        se += (pred - labels[k]).powi(2);
        se_copy += (history[history.len() - 1] - labels[k]).powi(2);
        n += 1;
    }
    (se / n as f64, se_copy / n as f64)
}
