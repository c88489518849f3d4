//! Synthetic feature tracking with motion-dependent dropout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::g12;
use crate::sim::{project, SimDataset};

use super::tracks::{classify_feature, FeatureId, Observation, Track, TrackTable, DEFAULT_HORIZON};

/// Per-frame track survival as a function of ground-truth motion:
/// `p = clamp(base - a * |omega| - b * |v|, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutModel {
    pub base_survival: f64,
    /// Survival lost per rad/s of angular speed.
    pub angular_sensitivity: f64,
    /// Survival lost per m/s of linear speed.
    pub linear_sensitivity: f64,
    /// Features detected in frame 0.
    pub initial_features: usize,
    /// Features injected in every later frame.
    pub new_per_frame: usize,
    /// Cap on simultaneously tracked features.
    pub max_active: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DropoutModel {
    fn default() -> Self {
        Self {
            base_survival: 0.97,
            angular_sensitivity: 0.2,
            linear_sensitivity: 0.02,
            initial_features: 100,
            new_per_frame: 100,
            max_active: 100,
            seed: 0,
        }
    }
}

impl DropoutModel {
    pub fn none(features: usize) -> Self {
        Self {
            base_survival: 1.0,
            angular_sensitivity: 0.0,
            linear_sensitivity: 0.0,
            initial_features: features,
            new_per_frame: features,
            max_active: features,
            seed: 0,
        }
    }

    pub fn survival_probability(&self, angular_speed: f64, linear_speed: f64) -> f64 {
        (self.base_survival
            - self.angular_sensitivity * angular_speed
            - self.linear_sensitivity * linear_speed)
            .clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_survival) {
            return Err(Error::InvalidConfig(
                "dropout.base_survival must be in [0, 1]".into(),
            ));
        }
        if self.angular_sensitivity < 0.0 || self.linear_sensitivity < 0.0 {
            return Err(Error::InvalidConfig(
                "dropout sensitivities must be >= 0".into(),
            ));
        }
        if self.max_active == 0 {
            return Err(Error::InvalidConfig(
                "dropout.max_active must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Observes landmarks from the true pose at each frame's true sampling
/// instant, adds pixel noise, drops tracks per the dropout model and injects
/// new features from in-view landmarks that are not currently tracked.
pub fn track_features<R: Rng + ?Sized>(
    dataset: &SimDataset,
    dropout: &DropoutModel,
    rng: &mut R,
) -> TrackTable {
    let rig = dataset.rig();
    let k_int = rig.intrinsics;
    let noise = (rig.pixel_sigma > 0.0).then(|| Normal::new(0.0, rig.pixel_sigma).expect("sigma"));
    let noisy = |px: Vector2<f64>, rng: &mut R| match &noise {
        Some(n) => px + Vector2::new(n.sample(rng), n.sample(rng)),
        None => px,
    };

    let mut table = TrackTable::default();
    let mut alive: Vec<(FeatureId, usize)> = Vec::new();
    let mut next_id: FeatureId = 0;

    for frame in &dataset.frames {
        let k = frame.index;
        let t_cw = rig.camera_from_world(&frame.pose);
        let projected: Vec<Option<Vector2<f64>>> = dataset
            .landmarks
            .iter()
            .map(|lm| project(&t_cw, lm, &k_int))
            .collect();
        let mut visible = Vec::new();

        let survival = if k == 0 {
            1.0
        } else {
            let omega = dataset.trajectory.angular_velocity(frame.true_time).norm();
            dropout.survival_probability(omega, frame.velocity.norm())
        };
        let mut still_alive = Vec::with_capacity(alive.len());
        for &(id, lm) in &alive {
            // Draw for every track so the stream does not depend on visibility.
            let keep = rng.random::<f64>() < survival;
            let Some(px) = projected[lm] else { continue };
            let px = noisy(px, rng);
            if keep && k_int.in_bounds(&px) {
                table
                    .tracks
                    .get_mut(&id)
                    .expect("live track")
                    .observations
                    .push(Observation {
                        feature: id,
                        frame: k,
                        pixel: px,
                        stamp: frame.stamp,
                    });
                still_alive.push((id, lm));
                visible.push(id);
            }
        }
        alive = still_alive;

        let quota = if k == 0 {
            dropout.initial_features
        } else {
            dropout.new_per_frame
        };
        let quota = quota.min(dropout.max_active.saturating_sub(alive.len()));
        if quota > 0 {
            let tracked: BTreeSet<usize> = alive.iter().map(|&(_, lm)| lm).collect();
            let mut candidates: Vec<usize> = (0..dataset.landmarks.len())
                .filter(|lm| projected[*lm].is_some() && !tracked.contains(lm))
                .collect();
            candidates.shuffle(rng);
            let mut added = 0;
            for lm in candidates {
                if added == quota {
                    break;
                }
                let px = noisy(projected[lm].expect("filtered"), rng);
                if !k_int.in_bounds(&px) {
                    continue;
                }
                let id = next_id;
                next_id += 1;
                table.tracks.insert(
                    id,
                    Track {
                        feature: id,
                        landmark: lm,
                        observations: vec![Observation {
                            feature: id,
                            frame: k,
                            pixel: px,
                            stamp: frame.stamp,
                        }],
                    },
                );
                alive.push((id, lm));
                visible.push(id);
                added += 1;
            }
        }
        visible.sort_unstable();
        table.frames.push(visible);
    }
    table
}

/// Writes `tracks.csv` with one row per observation.
pub fn write_tracks(table: &TrackTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature_id", "frame", "u", "v", "stamp", "class"])?;
    let mut rows: BTreeMap<(usize, FeatureId), [String; 6]> = BTreeMap::new();
    for track in table.tracks.values() {
        for o in &track.observations {
            let class = classify_feature(track, o.frame, DEFAULT_HORIZON);
            rows.insert(
                (o.frame, o.feature),
                [
                    o.feature.to_string(),
                    o.frame.to_string(),
                    g12(o.pixel.x),
                    g12(o.pixel.y),
                    g12(o.stamp),
                    class.as_str().to_string(),
                ],
            );
        }
    }
    for row in rows.values() {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
