//! Feature front-end: per-frame observations with tracking dropout,
//! constant-speed velocities and the feature classes used to route velocity
//! prediction.

mod tracker;
mod tracks;

pub use tracker::{track_features, write_tracks, DropoutModel};
pub use tracks::{
    classify_by, classify_feature, classify_in_window, constant_speed_velocity, FeatureClass,
    FeatureId, Observation, Track, TrackTable, DEFAULT_HORIZON,
};
