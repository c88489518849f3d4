use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};

use crate::frontend::FeatureId;
use crate::geometry::{exp_so3, Pose};

/// Body state of one frame at its reported timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameState {
    pub frame: usize,
    /// World-from-body rotation.
    pub rot: UnitQuaternion<f64>,
    /// Body position in the world, meters.
    pub pos: Vector3<f64>,
    /// World-frame velocity, m/s.
    pub vel: Vector3<f64>,
}

impl FrameState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.rot, self.pos)
    }

    /// Right-perturbs the rotation and adds to position and velocity.
    pub fn retract(&mut self, dtheta: &Vector3<f64>, dp: &Vector3<f64>, dv: &Vector3<f64>) {
        self.rot = self.rot * exp_so3(dtheta);
        self.rot.renormalize();
        self.pos += dp;
        self.vel += dv;
    }
}

/// Everything a window solve estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    /// Consecutive frames; the first one's pose is held fixed.
    pub frames: Vec<FrameState>,
    /// World-frame feature points.
    pub points: BTreeMap<FeatureId, Vector3<f64>>,
    /// Camera-IMU time offset, seconds.
    pub td: f64,
}

impl WindowState {
    pub fn first_frame(&self) -> usize {
        self.frames[0].frame
    }

    pub fn slot(&self, frame: usize) -> Option<usize> {
        let first = self.first_frame();
        (frame >= first && frame - first < self.frames.len()).then(|| frame - first)
    }

    pub fn frame(&self, frame: usize) -> Option<&FrameState> {
        self.slot(frame).map(|s| &self.frames[s])
    }
}
