use std::collections::BTreeMap;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type FeatureId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub feature: FeatureId,
    pub frame: usize,
    pub pixel: Vector2<f64>,
    /// Reported (IMU-clock) timestamp of the frame, seconds.
    pub stamp: f64,
}

/// One feature's observations, frame indices strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub feature: FeatureId,
    /// Ground-truth landmark behind the feature. Only evaluation code may
    /// look at this.
    pub landmark: usize,
    pub observations: Vec<Observation>,
}

impl Track {
    pub fn observation_at(&self, frame: usize) -> Option<&Observation> {
        self.observations
            .binary_search_by_key(&frame, |o| o.frame)
            .ok()
            .map(|i| &self.observations[i])
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.observation_at(frame).is_some()
    }

    pub fn first_frame(&self) -> usize {
        self.observations[0].frame
    }

    pub fn last_frame(&self) -> usize {
        self.observations[self.observations.len() - 1].frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureClass {
    /// Observed in the previous frame; the constant-speed velocity applies.
    WellMatched,
    /// New in this frame and tracked through the lookahead horizon.
    NewLongTracked,
    /// New in this frame with a shorter future track.
    NewShortTracked,
}

impl FeatureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureClass::WellMatched => "well_matched",
            FeatureClass::NewLongTracked => "new_long",
            FeatureClass::NewShortTracked => "new_short",
        }
    }
}

pub const DEFAULT_HORIZON: usize = 3;

/// Classification from frame-index membership alone.
pub fn classify_by(observed: impl Fn(usize) -> bool, frame: usize, horizon: usize) -> FeatureClass {
    if frame > 0 && observed(frame - 1) {
        FeatureClass::WellMatched
    } else if (1..=horizon).all(|d| observed(frame + d)) {
        FeatureClass::NewLongTracked
    } else {
        FeatureClass::NewShortTracked
    }
}

pub fn classify_feature(track: &Track, frame: usize, horizon: usize) -> FeatureClass {
    classify_by(|f| track.contains(f), frame, horizon)
}

/// Classification whose lookahead only sees frames up to `last_frame`
/// (inclusive), e.g. the end of the current solving window.
pub fn classify_in_window(
    track: &Track,
    frame: usize,
    horizon: usize,
    last_frame: usize,
) -> FeatureClass {
    classify_by(|f| f <= last_frame && track.contains(f), frame, horizon)
}

/// Constant-speed pixel velocity between frames `frame - 1` and `frame`,
/// using reported timestamps. `None` when either observation is missing.
pub fn constant_speed_velocity(track: &Track, frame: usize) -> Result<Option<Vector2<f64>>> {
    if frame == 0 {
        return Ok(None);
    }
    let (Some(cur), Some(prev)) = (track.observation_at(frame), track.observation_at(frame - 1))
    else {
        return Ok(None);
    };
    let dt = cur.stamp - prev.stamp;
    if !(dt > 0.0) {
        return Err(Error::DegenerateTimestamps {
            prev: prev.frame,
            next: cur.frame,
            stamp: cur.stamp,
        });
    }
    Ok(Some((cur.pixel - prev.pixel) / dt))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackTable {
    pub tracks: BTreeMap<FeatureId, Track>,
    /// Feature ids visible in each frame, ascending.
    pub frames: Vec<Vec<FeatureId>>,
}

impl TrackTable {
    pub fn track(&self, id: FeatureId) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn visible(&self, frame: usize) -> &[FeatureId] {
        self.frames.get(frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Fraction of the features in `frame` that lack an observation in the
    /// previous frame.
    pub fn new_fraction(&self, frame: usize) -> f64 {
        let ids = self.visible(frame);
        if ids.is_empty() || frame == 0 {
            return if ids.is_empty() { 0.0 } else { 1.0 };
        }
        let new = ids
            .iter()
            .filter(|id| !self.tracks[id].contains(frame - 1))
            .count();
        new as f64 / ids.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn track_with(frames: &[usize]) -> Track {
        Track {
            feature: 1,
            landmark: 0,
            observations: frames
                .iter()
                .map(|&k| Observation {
                    feature: 1,
                    frame: k,
                    pixel: Vector2::new(k as f64, 2.0 * k as f64),
                    stamp: 0.05 * k as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_speed_arithmetic() {
        let t = Track {
            feature: 3,
            landmark: 0,
            observations: vec![
                Observation {
                    feature: 3,
                    frame: 0,
                    pixel: Vector2::new(1.0, 1.0),
                    stamp: 0.0,
                },
                Observation {
                    feature: 3,
                    frame: 1,
                    pixel: Vector2::new(2.0, 3.0),
                    stamp: 0.1,
                },
            ],
        };
        let v = constant_speed_velocity(&t, 1).unwrap().unwrap();
        assert!((v - Vector2::new(10.0, 20.0)).norm() < 1e-12);
        assert_eq!(constant_speed_velocity(&t, 0).unwrap(), None);
    }

    #[test]
    fn first_observation_has_no_velocity() {
        let t = track_with(&[4, 5, 6]);
        assert_eq!(constant_speed_velocity(&t, 4).unwrap(), None);
        assert!(constant_speed_velocity(&t, 5).unwrap().is_some());
    }

    #[test]
    fn zero_time_difference_is_an_error() {
        let mut t = track_with(&[1, 2]);
        t.observations[1].stamp = t.observations[0].stamp;
        assert!(matches!(
            constant_speed_velocity(&t, 2),
            Err(Error::DegenerateTimestamps { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify_feature(&track_with(&[4, 5]), 5, 3),
            FeatureClass::WellMatched
        );
        assert_eq!(
            classify_feature(&track_with(&[5, 6, 7, 8]), 5, 3),
            FeatureClass::NewLongTracked
        );
        assert_eq!(
            classify_feature(&track_with(&[5, 6]), 5, 3),
            FeatureClass::NewShortTracked
        );
        assert_eq!(
            classify_in_window(&track_with(&[5, 6, 7, 8]), 5, 3, 7),
            FeatureClass::NewShortTracked
        );
    }

    proptest! {
        #[test]
        fn classification_depends_only_on_frame_set(
            set in proptest::collection::btree_set(0usize..20, 1..12),
            horizon in 1usize..5,
        ) {
            let frames: Vec<usize> = set.iter().copied().collect();
            let track = track_with(&frames);
            for &k in &frames {
                let expected = classify_by(|f| set.contains(&f), k, horizon);
                prop_assert_eq!(classify_feature(&track, k, horizon), expected);
                // Velocity is available exactly for well-matched observations.
                let has_v = constant_speed_velocity(&track, k).unwrap().is_some();
                prop_assert_eq!(has_v, expected == FeatureClass::WellMatched);
            }
        }
    }
}
