use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{
    classify_in_window, constant_speed_velocity, FeatureClass, FeatureId, Track, TrackTable,
};
use crate::nets::{F2fFvon, ItsFvon, Tpn, TrainConfig};
use crate::numfmt::{exact, g12};
use crate::sim::{SensorRig, SimDataset, NEAR_PLANE};

use super::imu::{preintegrate_imu, ImuFactor, Preintegration};
use super::prior::{ekf_propagate_td, PriorKind, TdPrior, TpnLabelBuffer};
use super::solver::{camera_point, solve_window, Problem, SolverConfig};
use super::state::{FrameState, WindowState};
use super::visual::{VelocityNoise, VelocitySource, VisualFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Velocity networks plus the offset prediction prior.
    Ton,
    /// Constant-speed velocities only and a random-walk offset prior.
    Sir,
    /// TON velocities with a scalar filter on the offset.
    Ekf,
    /// Velocity networks with the random-walk prior.
    FvonOnly,
    /// Constant-speed velocities with the offset prediction prior.
    TpnOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ton,
        Variant::Sir,
        Variant::Ekf,
        Variant::FvonOnly,
        Variant::TpnOnly,
    ];

    pub fn uses_fvon(&self) -> bool {
        matches!(self, Variant::Ton | Variant::Ekf | Variant::FvonOnly)
    }

    pub fn uses_tpn(&self) -> bool {
        matches!(self, Variant::Ton | Variant::Ekf | Variant::TpnOnly)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Ton => "ton",
            Variant::Sir => "sir",
            Variant::Ekf => "ekf",
            Variant::FvonOnly => "fvon-only",
            Variant::TpnOnly => "tpn-only",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}'")))
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the constant-speed-only variants do with features lacking a
/// previous observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UntrackedPolicy {
    /// Keep the factor with zero velocity and no offset Jacobian.
    ZeroVelocity,
    /// Leave the factor out.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetsConfig {
    pub its: TrainConfig,
    pub f2f: TrainConfig,
    pub tpn: TrainConfig,
    /// Longest in-window velocity runs kept for each ITS fit.
    pub max_its_sequences: usize,
    pub min_f2f_labels: usize,
    pub max_f2f_labels: usize,
    /// Keep network weights between fits instead of reinitializing.
    pub warm_start: bool,
}

impl Default for NetsConfig {
    fn default() -> Self {
        Self {
            its: TrainConfig::its_default(),
            f2f: TrainConfig::f2f_default(),
            tpn: TrainConfig::tpn_default(),
            max_its_sequences: 16,
            min_f2f_labels: 8,
            max_f2f_labels: 32,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Frames per window.
    pub window: usize,
    /// Frames between consecutive window starts.
    pub stride: usize,
    /// Lookahead for the long-tracked feature class.
    pub horizon: usize,
    pub solver: SolverConfig,
    /// Pixel standard deviation used to weight visual factors.
    pub pixel_sigma: f64,
    pub td_init: f64,
    /// Variance of the offset prior factor, s^2.
    pub td_prior_variance: f64,
    /// Filter process noise per step, s^2.
    pub filter_process_noise: f64,
    pub nets: NetsConfig,
    pub untracked: UntrackedPolicy,
    /// Depth used to place points that cannot be triangulated, meters.
    pub default_depth: f64,
    /// Prior standard deviation on points carried over from earlier
    /// windows, meters; stands in for the structure knowledge a
    /// marginalization prior would keep. `None` leaves them free.
    pub map_point_sigma: Option<f64>,
    /// Multiplier on the pixel sigma of factors whose velocity comes from a
    /// network. Their velocity error enters the residual scaled by td, and
    /// the points absorb most of the true td signal, so weighting them like
    /// tracked factors drags td toward zero.
    pub fvon_sigma_scale: f64,
    /// Keep every visual factor's velocity in the output.
    pub record_velocities: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: 10,
            stride: 5,
            horizon: 3,
            solver: SolverConfig::default(),
            pixel_sigma: 1.0,
            td_init: 0.0,
            td_prior_variance: 1e-6,
            filter_process_noise: 1e-8,
            nets: NetsConfig::default(),
            untracked: UntrackedPolicy::ZeroVelocity,
            default_depth: 5.0,
            map_point_sigma: None,
            fvon_sigma_scale: 10.0,
            record_velocities: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidConfig("estimator.window must be >= 2".into()));
        }
        if self.stride == 0 || self.stride >= self.window {
            return Err(Error::InvalidConfig(
                "estimator.stride must be in [1, window)".into(),
            ));
        }
        if !(self.pixel_sigma > 0.0) || !(self.td_prior_variance > 0.0) {
            return Err(Error::InvalidConfig(
                "estimator.pixel_sigma and td_prior_variance must be > 0".into(),
            ));
        }
        if !(self.fvon_sigma_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "estimator.fvon_sigma_scale must be > 0".into(),
            ));
        }
        if self.filter_process_noise < 0.0 {
            return Err(Error::InvalidConfig(
                "estimator.filter_process_noise must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-window diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub index: usize,
    pub first_frame: usize,
    pub last_frame: usize,
    pub td_est: f64,
    pub td_true_mean: f64,
    pub iterations: usize,
    pub cost_initial: f64,
    pub cost_final: f64,
    pub n_wellmatched: usize,
    pub n_its: usize,
    pub n_f2f: usize,
    pub n_fallback: usize,
    pub its_loss: Option<f64>,
    pub f2f_loss: Option<f64>,
    pub tpn_loss: Option<f64>,
    pub diverged: bool,
    pub td_prior_mean: Option<f64>,
    pub td_variance: Option<f64>,
    pub td_frozen: bool,
    pub td_clamped: bool,
    pub filter_jacobian: Option<f64>,
    /// Set when the window could not be solved.
    pub failure: Option<String>,
    /// Estimated world velocity at the window's last frame.
    pub velocity: Vector3<f64>,
}

/// Velocity attached to one visual factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityRecord {
    pub window: usize,
    pub frame: usize,
    pub feature: FeatureId,
    pub source: VelocitySource,
    pub velocity: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEstimate {
    pub frame: usize,
    pub stamp: f64,
    pub rot: UnitQuaternion<f64>,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub variant: Variant,
    pub records: Vec<WindowRecord>,
    /// Final estimate of every frame covered by a window, from the last
    /// window containing it.
    pub frames: Vec<FrameEstimate>,
    /// Contents of the offset label buffer at the end of the run.
    pub tpn_labels: Vec<f64>,
    /// Filled only when velocity recording is enabled.
    pub velocities: Vec<VelocityRecord>,
}

/// Least-squares intersection of viewing rays; `None` when the rays are
/// close to parallel or the point lands behind any camera.
pub fn triangulate(rig: &SensorRig, views: &[(FrameState, Vector2<f64>)]) -> Option<Vector3<f64>> {
    if views.len() < 2 {
        return None;
    }
    let imu_from_cam = rig.cam_from_imu().inverse();
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (body, px) in views {
        let centre = body.pos + body.rot * imu_from_cam.trans;
        let dir = (body.rot * (imu_from_cam.rot * rig.intrinsics.back_project(px))).normalize();
        let proj = Matrix3::identity() - dir * dir.transpose();
        a += proj;
        b += proj * centre;
    }
    let eig = SymmetricEigen::new(a);
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 1e-6 * hi) {
        return None;
    }
    let p = a.try_inverse()? * b;
    views
        .iter()
        .all(|(body, _)| camera_point(rig, body, &p).z > NEAR_PLANE)
        .then_some(p)
}

fn point_along_ray(
    rig: &SensorRig,
    body: &FrameState,
    px: &Vector2<f64>,
    depth: f64,
) -> Vector3<f64> {
    let p_cam = rig.intrinsics.back_project(px) * depth;
    let p_body = rig.cam_from_imu().inverse().transform(&p_cam);
    body.pos + body.rot * p_body
}

struct Pipeline<'a> {
    ds: &'a SimDataset,
    tracks: &'a TrackTable,
    variant: Variant,
    cfg: &'a EstimatorConfig,
    preint: Vec<Preintegration>,
    estimates: Vec<Option<FrameState>>,
    map: BTreeMap<FeatureId, Vector3<f64>>,
    its: ItsFvon,
    f2f: F2fFvon,
    tpn: Tpn,
    f2f_by_frame: BTreeMap<usize, Option<(F2fFvon, f64)>>,
}

struct WindowFactors {
    visual: Vec<VisualFactor>,
    its_loss: Option<f64>,
    f2f_losses: Vec<f64>,
}

impl<'a> Pipeline<'a> {
    fn initial_frames(&self, start: usize, end: usize) -> Vec<FrameState> {
        let g = self.ds.rig().gravity();
        let mut frames: Vec<FrameState> = Vec::with_capacity(end - start);
        for k in start..end {
            let fs = if let Some(est) = self.estimates[k] {
                est
            } else if k == 0 {
                let pose = self.ds.pose_at_stamp(0);
                FrameState {
                    frame: 0,
                    rot: pose.rot,
                    pos: pose.trans,
                    vel: self.ds.velocity_at_stamp(0),
                }
            } else {
                let prev = frames
                    .last()
                    .copied()
                    .or(self.estimates[k - 1])
                    .expect("previous frame estimated");
                self.preint[k - 1].propagate(&prev, &g, k)
            };
            frames.push(fs);
        }
        frames
    }

    /// Observations of every feature seen in the window, restricted to it.
    fn window_tracks(&self, start: usize, end: usize) -> BTreeMap<FeatureId, Vec<usize>> {
        let mut out: BTreeMap<FeatureId, Vec<usize>> = BTreeMap::new();
        for k in start..end {
            for &id in self.tracks.visible(k) {
                out.entry(id).or_default().push(k);
            }
        }
        out
    }

    /// Seeds window points from the map, triangulation or a default depth.
    /// Returns prior sigmas for the points taken from the map.
    fn init_points(
        &self,
        state: &mut WindowState,
        obs: &BTreeMap<FeatureId, Vec<usize>>,
    ) -> BTreeMap<FeatureId, f64> {
        let rig = self.ds.rig();
        let mut sigmas = BTreeMap::new();
        for (&id, frames) in obs {
            if frames.len() < 2 {
                continue;
            }
            let track = &self.tracks.tracks[&id];
            let views: Vec<(FrameState, Vector2<f64>)> = frames
                .iter()
                .map(|&k| {
                    (
                        *state.frame(k).unwrap(),
                        track.observation_at(k).unwrap().pixel,
                    )
                })
                .collect();
            let mapped = self.map.get(&id).copied().filter(|p| {
                views
                    .iter()
                    .all(|(b, _)| camera_point(rig, b, p).z > NEAR_PLANE)
            });
            if let (Some(_), Some(sigma)) = (mapped, self.cfg.map_point_sigma) {
                sigmas.insert(id, sigma);
            }
            let p = mapped
                .or_else(|| triangulate(rig, &views))
                .unwrap_or_else(|| {
                    let (b, px) = views.last().unwrap();
                    point_along_ray(rig, b, px, self.cfg.default_depth)
                });
            state.points.insert(id, p);
        }
        sigmas
    }

    /// Forward-time runs of constant-speed velocities inside the window.
    fn its_runs(&self, obs: &BTreeMap<FeatureId, Vec<usize>>) -> Result<Vec<Vec<Vector2<f64>>>> {
        let mut runs: Vec<(FeatureId, Vec<Vector2<f64>>)> = Vec::new();
        for (&id, frames) in obs {
            let track = &self.tracks.tracks[&id];
            let mut run = Vec::new();
            for &k in frames {
                if let Some(v) = constant_speed_velocity(track, k)? {
                    run.push(v);
                }
            }
            if run.len() >= 2 {
                runs.push((id, run));
            }
        }
        runs.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        runs.truncate(self.cfg.nets.max_its_sequences);
        Ok(runs.into_iter().map(|(_, r)| r).collect())
    }

    fn f2f_for_frame(
        &mut self,
        k: usize,
        state: &WindowState,
        losses: &mut Vec<f64>,
    ) -> Result<Option<F2fFvon>> {
        if let Some(cached) = self.f2f_by_frame.get(&k) {
            return Ok(cached.as_ref().map(|(m, _)| m.clone()));
        }
        let rig = self.ds.rig();
        let body = state.frame(k).expect("frame in window");
        let mut labels = Vec::new();
        for &id in self.tracks.visible(k) {
            let Some(p) = state.points.get(&id) else {
                continue;
            };
            let track = &self.tracks.tracks[&id];
            if let Some(v) = constant_speed_velocity(track, k)? {
                labels.push((camera_point(rig, body, p), v));
            }
        }
        if labels.len() < self.cfg.nets.min_f2f_labels {
            self.f2f_by_frame.insert(k, None);
            return Ok(None);
        }
        if labels.len() > self.cfg.nets.max_f2f_labels {
            let n = labels.len();
            let m = self.cfg.nets.max_f2f_labels;
            labels = (0..m).map(|i| labels[i * n / m]).collect();
        }
        if !self.cfg.nets.warm_start {
            self.f2f = F2fFvon::new(self.cfg.nets.f2f);
        }
        let report = self.f2f.fit(&labels)?;
        let loss = report.map(|r| r.final_loss).unwrap_or(0.0);
        losses.push(loss);
        self.f2f_by_frame.insert(k, Some((self.f2f.clone(), loss)));
        Ok(Some(self.f2f.clone()))
    }

    fn build_visual(
        &mut self,
        state: &WindowState,
        obs: &BTreeMap<FeatureId, Vec<usize>>,
        last: usize,
    ) -> Result<WindowFactors> {
        let sigma = self.cfg.pixel_sigma;
        let use_fvon = self.variant.uses_fvon();
        let mut its_loss = None;
        if use_fvon {
            let runs = self.its_runs(obs)?;
            if !runs.is_empty() {
                if !self.cfg.nets.warm_start {
                    self.its = ItsFvon::new(self.cfg.nets.its);
                }
                its_loss = self.its.fit(&runs)?.map(|r| r.final_loss);
            }
        }
        let mut f2f_losses = Vec::new();
        let mut visual = Vec::new();
        for (&id, frames) in obs {
            if !state.points.contains_key(&id) {
                continue;
            }
            let track: &Track = &self.tracks.tracks[&id];
            for &k in frames {
                let pixel = track.observation_at(k).unwrap().pixel;
                let zero = (Vector2::zeros(), VelocitySource::ZeroFallback);
                let (velocity, source) = match constant_speed_velocity(track, k)? {
                    Some(v) => (v, VelocitySource::ConstantSpeed),
                    None if !use_fvon => {
                        if self.cfg.untracked == UntrackedPolicy::Drop {
                            continue;
                        }
                        zero
                    }
                    None => match classify_in_window(track, k, self.cfg.horizon, last) {
                        FeatureClass::NewLongTracked => {
                            let mut future = Vec::new();
                            for j in (k + 1..=last).take_while(|&j| track.contains(j)) {
                                future
                                    .push(constant_speed_velocity(track, j)?.expect("consecutive"));
                            }
                            future.reverse();
                            let p = self.its.predict(&future)?;
                            if p.fallback.is_some() {
                                zero
                            } else {
                                (p.value, VelocitySource::ItsFvon)
                            }
                        }
                        _ => match self.f2f_for_frame(k, state, &mut f2f_losses)? {
                            Some(model) => {
                                let body = state.frame(k).unwrap();
                                let pc = camera_point(self.ds.rig(), body, &state.points[&id]);
                                let p = model.predict(&pc)?;
                                if p.fallback.is_some() {
                                    zero
                                } else {
                                    (p.value, VelocitySource::F2fFvon)
                                }
                            }
                            None => zero,
                        },
                    },
                };
                visual.push(VisualFactor {
                    feature: id,
                    frame: k,
                    pixel,
                    velocity,
                    source,
                    sigma: match source {
                        VelocitySource::ItsFvon | VelocitySource::F2fFvon => {
                            sigma * self.cfg.fvon_sigma_scale
                        }
                        _ => sigma,
                    },
                    velocity_noise: velocity_noise(track, k, source),
                });
            }
        }
        Ok(WindowFactors {
            visual,
            its_loss,
            f2f_losses,
        })
    }
}

/// How a factor's velocity depends on the track's own pixels. The
/// constant-speed velocity differences frame k with k-1; the recurrent
/// prediction is treated as a copy of the k+1 difference, its dominant input.
fn velocity_noise(track: &Track, k: usize, source: VelocitySource) -> Option<VelocityNoise> {
    let inv_dt = |a: usize, b: usize| match (track.observation_at(a), track.observation_at(b)) {
        (Some(x), Some(y)) if y.stamp > x.stamp => Some(1.0 / (y.stamp - x.stamp)),
        _ => None,
    };
    match source {
        VelocitySource::ConstantSpeed => {
            let j = k.checked_sub(1)?;
            inv_dt(j, k).map(|w| VelocityNoise {
                own: w,
                other: -w,
                other_frame: j,
            })
        }
        VelocitySource::ItsFvon => inv_dt(k, k + 1).map(|w| VelocityNoise {
            own: -w,
            other: w,
            other_frame: k + 1,
        }),
        VelocitySource::F2fFvon | VelocitySource::ZeroFallback => None,
    }
}

/// Runs a pipeline variant over a dataset with windows of
/// `config.window` frames advancing by `config.stride`.
pub fn run_pipeline(
    ds: &SimDataset,
    tracks: &TrackTable,
    variant: Variant,
    config: &EstimatorConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let n = ds.frames.len();
    if tracks.frame_count() != n {
        return Err(Error::IndexMismatch(format!(
            "track table has {} frames, dataset has {n}",
            tracks.frame_count()
        )));
    }
    let rig = ds.rig();
    let preint = (0..n.saturating_sub(1))
        .map(|k| {
            preintegrate_imu(
                &ds.imu,
                ds.frames[k].stamp,
                ds.frames[k + 1].stamp,
                rig.gyro_sigma,
                rig.accel_sigma,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let nets = &config.nets;
    let mut p = Pipeline {
        ds,
        tracks,
        variant,
        cfg: config,
        preint,
        estimates: vec![None; n],
        map: BTreeMap::new(),
        its: ItsFvon::new(nets.its),
        f2f: F2fFvon::new(nets.f2f),
        tpn: Tpn::new(nets.tpn),
        f2f_by_frame: BTreeMap::new(),
    };
    let mut buffer = TpnLabelBuffer::default();
    let mut td_est = config.td_init;
    let mut filter_var = config.td_prior_variance;
    let d_t = config.stride as f64 * rig.frame_interval();
    let mut records = Vec::new();
    let mut velocities = Vec::new();

    let mut start = 0;
    let mut index = 0;
    while start + config.window <= n {
        let end = start + config.window;
        let last = end - 1;
        let mut state = WindowState {
            frames: p.initial_frames(start, end),
            points: BTreeMap::new(),
            td: td_est,
        };
        let obs = p.window_tracks(start, end);
        let point_sigma = p.init_points(&mut state, &obs);

        // Stages 1 and 2: velocity labels and network predictions.
        let factors = p.build_visual(&state, &obs, last)?;
        let count = {
            let visual = &factors.visual;
            move |s: VelocitySource| visual.iter().filter(|f| f.source == s).count()
        };
        let counts = [
            count(VelocitySource::ConstantSpeed),
            count(VelocitySource::ItsFvon),
            count(VelocitySource::F2fFvon),
            count(VelocitySource::ZeroFallback),
        ];

        // Stage 3: previous window's estimate becomes a label.
        if index > 0 {
            buffer.push(td_est);
        }

        // Stage 4: offset prior.
        let mut tpn_loss = None;
        let mut filter_jacobian = None;
        let tpn_prediction = |p: &mut Pipeline, loss: &mut Option<f64>| -> Result<f64> {
            let hist = buffer.to_vec();
            if !p.cfg.nets.warm_start {
                p.tpn = Tpn::new(p.cfg.nets.tpn);
            }
            *loss = p.tpn.fit(&hist)?.map(|r| r.final_loss);
            Ok(p.tpn.predict(&hist)?.value)
        };
        let prior = if buffer.is_empty() {
            None
        } else {
            match variant {
                Variant::Ton | Variant::TpnOnly => {
                    let pred = tpn_prediction(&mut p, &mut tpn_loss)?;
                    Some(TdPrior::new(
                        pred,
                        config.td_prior_variance,
                        PriorKind::Tpn,
                    )?)
                }
                Variant::Sir | Variant::FvonOnly => Some(TdPrior::new(
                    td_est,
                    config.td_prior_variance,
                    PriorKind::RandomWalk,
                )?),
                Variant::Ekf => {
                    let pred = tpn_prediction(&mut p, &mut tpn_loss)?;
                    let prop = ekf_propagate_td(
                        td_est,
                        pred,
                        d_t,
                        filter_var,
                        config.filter_process_noise,
                    )?;
                    filter_jacobian = Some(prop.jacobian);
                    filter_var = prop.variance;
                    Some(TdPrior::new(prop.mean, prop.variance, PriorKind::Filter)?)
                }
            }
        };
        if let Some(pr) = &prior {
            state.td = pr.mean;
        }

        if config.record_velocities {
            velocities.extend(factors.visual.iter().map(|f| VelocityRecord {
                window: index,
                frame: f.frame,
                feature: f.feature,
                source: f.source,
                velocity: f.velocity,
            }));
        }
        let mut problem = Problem {
            visual: factors.visual,
            imu: (start..last)
                .map(|k| ImuFactor::new(k, k + 1, p.preint[k], config.solver.imu_cov_floor))
                .collect(),
            td_prior: prior,
            point_sigma,
        };
        let td_true_mean =
            ds.frames[start..end].iter().map(|f| f.td_true).sum::<f64>() / config.window as f64;
        let mut record = WindowRecord {
            index,
            first_frame: start,
            last_frame: last,
            td_est,
            td_true_mean,
            iterations: 0,
            cost_initial: f64::NAN,
            cost_final: f64::NAN,
            n_wellmatched: counts[0],
            n_its: counts[1],
            n_f2f: counts[2],
            n_fallback: counts[3],
            its_loss: factors.its_loss,
            f2f_loss: (!factors.f2f_losses.is_empty())
                .then(|| factors.f2f_losses.iter().sum::<f64>() / factors.f2f_losses.len() as f64),
            tpn_loss,
            diverged: false,
            td_prior_mean: prior.map(|pr| pr.mean),
            td_variance: None,
            td_frozen: false,
            td_clamped: false,
            filter_jacobian,
            failure: None,
            velocity: Vector3::zeros(),
        };

        let solver_config = SolverConfig {
            pixel_noise_sigma: config.pixel_sigma,
            ..config.solver.clone()
        };
        let solved = match solve_window(&problem, &state, rig, &solver_config) {
            Ok(res) => {
                record.iterations = res.iterations;
                record.cost_initial = res.cost_trace[0];
                record.cost_final = *res.cost_trace.last().unwrap();
                record.diverged = res.diverged;
                record.td_variance = res.td_variance;
                record.td_frozen = res.td_frozen;
                record.td_clamped = res.td_clamped;
                if variant == Variant::Ekf {
                    if let Some(v) = res.td_variance {
                        filter_var = v;
                    }
                }
                res.state
            }
            Err(e) => {
                log::debug!("window {index} not solved: {e}");
                record.failure = Some(e.to_string());
                // Keep the propagated poses and the previous offset.
                state.td = td_est;
                state
            }
        };
        problem.visual.clear();
        td_est = solved.td;
        for fs in &solved.frames {
            p.estimates[fs.frame] = Some(*fs);
        }
        for (id, pt) in &solved.points {
            p.map.insert(*id, *pt);
        }
        // Frames never revisited no longer need their cached networks.
        let next_start = start + config.stride;
        p.f2f_by_frame.retain(|&k, _| k >= next_start);
        record.td_est = td_est;
        record.velocity = solved.frames.last().unwrap().vel;
        log::debug!(
            "window {index} [{start}, {last}] td {:.4} ms (true {:.4} ms)",
            td_est * 1e3,
            td_true_mean * 1e3
        );
        records.push(record);
        start = next_start;
        index += 1;
    }

    let frames = p
        .estimates
        .iter()
        .flatten()
        .map(|fs| FrameEstimate {
            frame: fs.frame,
            stamp: ds.frames[fs.frame].stamp,
            rot: fs.rot,
            pos: fs.pos,
            vel: fs.vel,
        })
        .collect();
    Ok(PipelineOutput {
        variant,
        records,
        frames,
        tpn_labels: buffer.to_vec(),
        velocities,
    })
}

pub fn run_ton_pipeline(
    ds: &SimDataset,
    tracks: &TrackTable,
    config: &EstimatorConfig,
) -> Result<PipelineOutput> {
    run_pipeline(ds, tracks, Variant::Ton, config)
}

pub fn run_sir_baseline(
    ds: &SimDataset,
    tracks: &TrackTable,
    config: &EstimatorConfig,
) -> Result<PipelineOutput> {
    run_pipeline(ds, tracks, Variant::Sir, config)
}

fn opt(x: Option<f64>) -> String {
    x.map(g12).unwrap_or_default()
}

pub const WINDOWS_HEADER: [&str; 19] = [
    "window",
    "first_frame",
    "last_frame",
    "td_est",
    "td_true_mean",
    "iterations",
    "cost_initial",
    "cost_final",
    "n_wellmatched",
    "n_its",
    "n_f2f",
    "n_fallback",
    "its_loss",
    "f2f_loss",
    "tpn_loss",
    "divergence_flag",
    "vel_x",
    "vel_y",
    "vel_z",
];

pub fn write_windows_csv(records: &[WindowRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(WINDOWS_HEADER)?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            r.first_frame.to_string(),
            r.last_frame.to_string(),
            exact(r.td_est),
            exact(r.td_true_mean),
            r.iterations.to_string(),
            g12(r.cost_initial),
            g12(r.cost_final),
            r.n_wellmatched.to_string(),
            r.n_its.to_string(),
            r.n_f2f.to_string(),
            r.n_fallback.to_string(),
            opt(r.its_loss),
            opt(r.f2f_loss),
            opt(r.tpn_loss),
            u8::from(r.diverged || r.failure.is_some()).to_string(),
            exact(r.velocity.x),
            exact(r.velocity.y),
            exact(r.velocity.z),
        ])?;
    }
    w.flush()?;
    Ok(())
}
