use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureId;
use crate::sim::SensorRig;

use super::imu::ImuFactor;
use super::prior::TdPrior;
use super::state::{FrameState, WindowState};
use super::visual::{visual_residual, VisualFactor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this fraction
    /// of the larger of the cost and the residual count.
    pub relative_tolerance: f64,
    pub initial_lambda: f64,
    pub max_lambda: f64,
    /// Bound on |td|; defaults to half the frame interval.
    pub td_clamp: Option<f64>,
    /// Below this much visual offset information (sum of whitened |V|^2,
    /// 1/s^2) the offset is held fixed.
    pub td_min_information: f64,
    /// The offset is also held fixed unless the visual offset information
    /// exceeds this multiple of the part pixel noise alone would put into
    /// differenced velocities, which keeps a static rig from fitting noise.
    pub td_min_snr: f64,
    /// Variances added to the rotation, velocity and position blocks of every
    /// preintegrated covariance.
    pub imu_cov_floor: [f64; 3],
    /// Standard deviation of the weak prior tying each point to its
    /// initialization, meters.
    pub point_prior_sigma: f64,
    pub min_visual_factors: usize,
    /// Subtract the expected pixel-noise energy left in residuals whose
    /// velocity was differenced from the same noisy pixels. Without it td is
    /// pulled toward the noise-minimizing interpolation point.
    pub compensate_velocity_noise: bool,
    /// Pixel noise standard deviation assumed by the compensation.
    pub pixel_noise_sigma: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            relative_tolerance: 1e-9,
            initial_lambda: 1e-4,
            max_lambda: 1e10,
            td_clamp: None,
            td_min_information: 1.0,
            td_min_snr: 2.0,
            imu_cov_floor: [1e-10, 1e-8, 1e-10],
            point_prior_sigma: 100.0,
            min_visual_factors: 8,
            compensate_velocity_noise: true,
            pixel_noise_sigma: 1.0,
        }
    }
}

/// Factors of one window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Problem {
    pub visual: Vec<VisualFactor>,
    pub imu: Vec<ImuFactor>,
    pub td_prior: Option<TdPrior>,
    /// Per-point prior standard deviations overriding the configured weak
    /// prior, meters.
    pub point_sigma: BTreeMap<FeatureId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub state: WindowState,
    /// Cost before the first step and after every accepted step.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub diverged: bool,
    pub td_frozen: bool,
    pub td_clamped: bool,
    /// Marginal variance of td from the final normal equations.
    pub td_variance: Option<f64>,
    pub td_information: f64,
    pub active_visual: usize,
}

/// Penalty charged for a factor whose point falls behind the camera, so
/// steps that cause it are rejected.
const INACTIVE_PENALTY: f64 = 1e6;
const DAMPING_FLOOR: f64 = 1e-9;

/// Expected pixel-noise energy left in one track's whitened residuals after
/// its point is fitted, as a quadratic in td. Each residual's noise is a
/// combination of the track's pixel noises with coefficients linear in td;
/// the point absorbs the share given by its leverage `J_p V^-1 J_p^T`.
#[derive(Default)]
struct NoiseTerms {
    terms: Vec<[Option<(usize, f64, f64)>; 2]>,
    /// Pixel noise over the factor's weighting sigma.
    ratio: Vec<f64>,
    jp: Vec<Matrix2x3<f64>>,
    v: Matrix3<f64>,
}

impl NoiseTerms {
    fn clear(&mut self, point_weight: f64) {
        self.terms.clear();
        self.ratio.clear();
        self.jp.clear();
        self.v = Matrix3::identity() * point_weight;
    }

    /// Adds a factor with pixel noise `noise_sigma` and its whitened point
    /// Jacobian.
    fn push(&mut self, f: &VisualFactor, noise_sigma: f64, jp: Matrix2x3<f64>) {
        self.terms.push(f.noise_terms());
        self.ratio.push(noise_sigma / f.sigma);
        self.v += jp.transpose() * jp;
        self.jp.push(jp);
    }

    /// `[c0, c1, c2]` with energy `c0 + c1 td + c2 td^2`.
    fn quadratic(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        let Some(vinv) = self.v.try_inverse() else {
            return c;
        };
        let m = self.jp.len();
        let left: Vec<Matrix2x3<f64>> = self.jp.iter().map(|j| j * vinv).collect();
        for f in 0..m {
            for g in 0..m {
                let mut dot = [0.0; 3];
                for &(fa, a0, a1) in self.terms[f].iter().flatten() {
                    for &(fb, b0, b1) in self.terms[g].iter().flatten() {
                        if fa == fb {
                            dot[0] += a0 * b0;
                            dot[1] += a0 * b1 + a1 * b0;
                            dot[2] += a1 * b1;
                        }
                    }
                }
                if dot == [0.0; 3] {
                    continue;
                }
                let scale = self.ratio[f] * self.ratio[g];
                let lev = left[f].component_mul(&self.jp[g]).sum();
                let w = if f == g { 2.0 - lev } else { -lev };
                for k in 0..3 {
                    c[k] += w * scale * dot[k];
                }
            }
        }
        c
    }
}

struct Layout {
    frames: usize,
    dim: usize,
    td: usize,
}

impl Layout {
    fn new(frames: usize) -> Self {
        let dim = 3 + 9 * (frames - 1) + 1;
        Self {
            frames,
            dim,
            td: dim - 1,
        }
    }

    /// Index of the rotation block of a non-anchor slot.
    fn rot(&self, slot: usize) -> Option<usize> {
        (slot > 0 && slot < self.frames).then(|| 3 + 9 * (slot - 1))
    }

    fn vel(&self, slot: usize) -> usize {
        if slot == 0 {
            0
        } else {
            3 + 9 * (slot - 1) + 6
        }
    }

    /// Global indices of `[theta, p, v]` for a slot.
    fn frame_indices(&self, slot: usize) -> [Option<usize>; 9] {
        let mut out = [None; 9];
        if let Some(r) = self.rot(slot) {
            for (k, o) in out.iter_mut().take(6).enumerate() {
                *o = Some(r + k);
            }
        }
        let v = self.vel(slot);
        for k in 0..3 {
            out[6 + k] = Some(v + k);
        }
        out
    }
}

struct PointBlock {
    feature: FeatureId,
    /// Global pose-vector indices touched by this point's factors.
    idx: Vec<usize>,
    w: DMatrix<f64>,
    v: Matrix3<f64>,
    g: Vector3<f64>,
}

struct System {
    h: DMatrix<f64>,
    g: DVector<f64>,
    points: Vec<PointBlock>,
}

struct Step {
    dx: DVector<f64>,
    dp: Vec<Vector3<f64>>,
    predicted: f64,
}

struct Solver<'a> {
    problem: &'a Problem,
    rig: &'a SensorRig,
    config: &'a SolverConfig,
    layout: Layout,
    groups: BTreeMap<FeatureId, Vec<usize>>,
    anchors: BTreeMap<FeatureId, Vector3<f64>>,
    frozen: bool,
    clamp: f64,
}

impl<'a> Solver<'a> {
    fn cost(&self, state: &WindowState) -> f64 {
        let cam = self.rig.cam_from_imu();
        let g = self.rig.gravity();
        let mut cost = 0.0;
        let mut noise = NoiseTerms::default();
        for (feature, idxs) in &self.groups {
            let p = &state.points[feature];
            let pw = self.point_weight(feature);
            noise.clear(pw);
            for &i in idxs {
                let f = &self.problem.visual[i];
                let body = state.frame(f.frame).expect("factor frame in window");
                match visual_residual(f, body, p, state.td, &cam, &self.rig.intrinsics) {
                    Some(e) => {
                        cost += e.residual.norm_squared() / (f.sigma * f.sigma);
                        noise.push(f, self.config_noise_sigma(), e.d_point / f.sigma);
                    }
                    None => cost += INACTIVE_PENALTY,
                }
            }
            let d = p - self.anchors[feature];
            cost += d.norm_squared() * pw;
            if self.config.compensate_velocity_noise {
                let [c0, c1, c2] = noise.quadratic();
                cost -= c0 + state.td * (c1 + state.td * c2);
            }
        }
        for fac in &self.problem.imu {
            let (xi, xj) = (state.frame(fac.from).unwrap(), state.frame(fac.to).unwrap());
            cost += (fac.sqrt_info * fac.residual(xi, xj, &g)).norm_squared();
        }
        if let Some(pr) = &self.problem.td_prior {
            cost += (state.td - pr.mean).powi(2) / pr.variance;
        }
        cost
    }

    fn config_noise_sigma(&self) -> f64 {
        self.config.pixel_noise_sigma
    }

    fn point_weight(&self, feature: &FeatureId) -> f64 {
        let sigma = self
            .problem
            .point_sigma
            .get(feature)
            .copied()
            .unwrap_or(self.config.point_prior_sigma);
        1.0 / (sigma * sigma)
    }

    fn linearize(&self, state: &WindowState) -> System {
        let lay = &self.layout;
        let mut h = DMatrix::zeros(lay.dim, lay.dim);
        let mut g = DVector::zeros(lay.dim);
        let cam = self.rig.cam_from_imu();
        let gravity = self.rig.gravity();
        let mut points = Vec::with_capacity(self.groups.len());
        let mut noise = NoiseTerms::default();

        for (feature, idxs) in &self.groups {
            let p = state.points[feature];
            // Local index list: 6 per observing non-anchor slot, then td.
            let mut slots: Vec<usize> = idxs
                .iter()
                .filter_map(|&i| state.slot(self.problem.visual[i].frame))
                .filter(|&s| s > 0)
                .collect();
            slots.sort_unstable();
            slots.dedup();
            let m = 6 * slots.len() + 1;
            let mut idx = Vec::with_capacity(m);
            for &s in &slots {
                let r = lay.rot(s).expect("non-anchor slot");
                idx.extend(r..r + 6);
            }
            idx.push(lay.td);

            let mut hl = DMatrix::<f64>::zeros(m, m);
            let mut gl = DVector::<f64>::zeros(m);
            let mut w = DMatrix::<f64>::zeros(m, 3);
            let pw = self.point_weight(feature);
            let mut v = Matrix3::identity() * pw;
            let mut gp = (p - self.anchors[feature]) * pw;
            noise.clear(pw);
            for &i in idxs {
                let f = &self.problem.visual[i];
                let slot = state.slot(f.frame).expect("factor frame in window");
                let body = &state.frames[slot];
                let Some(e) = visual_residual(f, body, &p, state.td, &cam, &self.rig.intrinsics)
                else {
                    continue;
                };
                let s = 1.0 / f.sigma;
                let r = e.residual * s;
                // Nonzero columns: rotation and position of this slot, then td.
                let mut jl = SMatrix::<f64, 2, 7>::zeros();
                let mut cols = [m - 1; 7];
                let first = if slot > 0 {
                    let lo = 6 * slots.binary_search(&slot).expect("slot listed");
                    jl.fixed_view_mut::<2, 3>(0, 0).copy_from(&(e.d_rot * s));
                    jl.fixed_view_mut::<2, 3>(0, 3).copy_from(&(e.d_pos * s));
                    for (c, col) in cols.iter_mut().take(6).enumerate() {
                        *col = lo + c;
                    }
                    0
                } else {
                    6
                };
                jl.set_column(6, &(e.d_td * s));
                let jp = e.d_point * s;
                let jtj = jl.transpose() * jl;
                let jtr = jl.transpose() * r;
                let jtp = jl.transpose() * jp;
                for a in first..7 {
                    gl[cols[a]] += jtr[a];
                    for b in first..7 {
                        hl[(cols[a], cols[b])] += jtj[(a, b)];
                    }
                    for d in 0..3 {
                        w[(cols[a], d)] += jtp[(a, d)];
                    }
                }
                v += jp.transpose() * jp;
                gp += jp.transpose() * r;
                noise.push(f, self.config_noise_sigma(), jp);
            }
            if self.config.compensate_velocity_noise {
                // Half-cost convention: subtract half the derivatives.
                let [_, c1, c2] = noise.quadratic();
                gl[m - 1] -= 0.5 * (c1 + 2.0 * c2 * state.td);
                hl[(m - 1, m - 1)] -= c2;
            }
            for a in 0..m {
                g[idx[a]] += gl[a];
                for b in 0..m {
                    h[(idx[a], idx[b])] += hl[(a, b)];
                }
            }
            points.push(PointBlock {
                feature: *feature,
                idx,
                w,
                v,
                g: gp,
            });
        }

        for fac in &self.problem.imu {
            let (si, sj) = (state.slot(fac.from).unwrap(), state.slot(fac.to).unwrap());
            let (r, j) = fac.evaluate(&state.frames[si], &state.frames[sj], &gravity, true);
            let r = fac.sqrt_info * r;
            let j = fac.sqrt_info * j;
            let mut cols = [None; 18];
            cols[..9].copy_from_slice(&lay.frame_indices(si));
            cols[9..].copy_from_slice(&lay.frame_indices(sj));
            let jtj = j.transpose() * j;
            let jtr = j.transpose() * r;
            for a in 0..18 {
                let Some(ga) = cols[a] else { continue };
                g[ga] += jtr[a];
                for b in 0..18 {
                    if let Some(gb) = cols[b] {
                        h[(ga, gb)] += jtj[(a, b)];
                    }
                }
            }
        }

        if let Some(pr) = &self.problem.td_prior {
            h[(lay.td, lay.td)] += 1.0 / pr.variance;
            g[lay.td] += (state.td - pr.mean) / pr.variance;
        }
        System { h, g, points }
    }

    /// Damped Schur-complement step; `None` if the reduced system is not
    /// positive definite.
    fn step(&self, sys: &System, lambda: f64) -> Option<Step> {
        let lay = &self.layout;
        let mut s = sys.h.clone();
        let mut b = sys.g.clone();
        let mut damp = DVector::zeros(lay.dim);
        for i in 0..lay.dim {
            damp[i] = sys.h[(i, i)] + DAMPING_FLOOR;
            s[(i, i)] += lambda * damp[i];
        }
        let mut vinvs = Vec::with_capacity(sys.points.len());
        for pb in &sys.points {
            let mut v = pb.v;
            for d in 0..3 {
                v[(d, d)] += lambda * (pb.v[(d, d)] + DAMPING_FLOOR);
            }
            let vinv = v.try_inverse()?;
            let wv = &pb.w * vinv;
            let red = &wv * pb.w.transpose();
            let rg = &wv * pb.g;
            for (a, &ia) in pb.idx.iter().enumerate() {
                b[ia] -= rg[a];
                for (c, &ic) in pb.idx.iter().enumerate() {
                    s[(ia, ic)] -= red[(a, c)];
                }
            }
            vinvs.push(vinv);
        }
        if self.frozen {
            for i in 0..lay.dim {
                s[(lay.td, i)] = 0.0;
                s[(i, lay.td)] = 0.0;
            }
            s[(lay.td, lay.td)] = 1.0;
            b[lay.td] = 0.0;
        }
        let dx = s.cholesky()?.solve(&(-b));
        let mut predicted = 0.0;
        for i in 0..lay.dim {
            if self.frozen && i == lay.td {
                continue;
            }
            predicted += -sys.g[i] * dx[i] + lambda * damp[i] * dx[i] * dx[i];
        }
        let mut dp = Vec::with_capacity(sys.points.len());
        for (pb, vinv) in sys.points.iter().zip(&vinvs) {
            let mut rhs = -pb.g;
            for (a, &ia) in pb.idx.iter().enumerate() {
                for d in 0..3 {
                    rhs[d] -= pb.w[(a, d)] * dx[ia];
                }
            }
            let step = vinv * rhs;
            for d in 0..3 {
                predicted += -pb.g[d] * step[d]
                    + lambda * (pb.v[(d, d)] + DAMPING_FLOOR) * step[d] * step[d];
            }
            dp.push(step);
        }
        Some(Step { dx, dp, predicted })
    }

    /// Returns the stepped state and whether td hit the clamp.
    fn apply(&self, state: &WindowState, sys: &System, step: &Step) -> (WindowState, bool) {
        let lay = &self.layout;
        let mut next = state.clone();
        for (slot, fs) in next.frames.iter_mut().enumerate() {
            let dv = step.dx.fixed_rows::<3>(lay.vel(slot)).into_owned();
            match lay.rot(slot) {
                Some(r) => {
                    let dth = step.dx.fixed_rows::<3>(r).into_owned();
                    let dp = step.dx.fixed_rows::<3>(r + 3).into_owned();
                    fs.retract(&dth, &dp, &dv);
                }
                None => fs.vel += dv,
            }
        }
        for (pb, d) in sys.points.iter().zip(&step.dp) {
            *next.points.get_mut(&pb.feature).expect("point in state") += d;
        }
        let mut clamped = false;
        if !self.frozen {
            let td = state.td + step.dx[lay.td];
            next.td = td.clamp(-self.clamp, self.clamp);
            clamped = next.td != td;
        }
        (next, clamped)
    }

    fn td_variance(&self, state: &WindowState) -> Option<f64> {
        if self.frozen {
            return None;
        }
        let sys = self.linearize(state);
        let lay = &self.layout;
        let mut s = sys.h.clone();
        for i in 0..lay.dim {
            s[(i, i)] += DAMPING_FLOOR;
        }
        for pb in &sys.points {
            let vinv = pb.v.try_inverse()?;
            let red = &pb.w * vinv * pb.w.transpose();
            for (a, &ia) in pb.idx.iter().enumerate() {
                for (c, &ic) in pb.idx.iter().enumerate() {
                    s[(ia, ic)] -= red[(a, c)];
                }
            }
        }
        let mut e = DVector::zeros(lay.dim);
        e[lay.td] = 1.0;
        let y = s.cholesky()?.solve(&e);
        (y[lay.td] > 0.0).then_some(y[lay.td])
    }
}

/// Sum over factors of whitened squared offset Jacobians, 1/s^2.
pub fn td_information(visual: &[VisualFactor]) -> f64 {
    visual
        .iter()
        .map(|f| f.effective_velocity().norm_squared() / (f.sigma * f.sigma))
        .sum()
}

/// Expected value of [`td_information`] when every differenced velocity is
/// pure pixel noise of standard deviation `pixel_sigma`.
pub fn td_noise_information(visual: &[VisualFactor], pixel_sigma: f64) -> f64 {
    visual
        .iter()
        .filter_map(|f| {
            let n = f.velocity_noise?;
            Some(
                2.0 * (n.own * n.own + n.other * n.other) * pixel_sigma * pixel_sigma
                    / (f.sigma * f.sigma),
            )
        })
        .sum()
}

/// Damped Gauss-Newton over poses, velocities, points and td with the first
/// pose held fixed.
pub fn solve_window(
    problem: &Problem,
    initial: &WindowState,
    rig: &SensorRig,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let n_frames = initial.frames.len();
    if n_frames < 2 {
        return Err(Error::InsufficientFactors {
            frames: n_frames,
            visual: problem.visual.len(),
        });
    }
    for w in initial.frames.windows(2) {
        if w[1].frame != w[0].frame + 1 {
            return Err(Error::IndexMismatch(
                "window frames must be consecutive".into(),
            ));
        }
    }
    let mut groups: BTreeMap<FeatureId, Vec<usize>> = BTreeMap::new();
    for (i, f) in problem.visual.iter().enumerate() {
        if initial.points.contains_key(&f.feature) && initial.slot(f.frame).is_some() {
            groups.entry(f.feature).or_default().push(i);
        }
    }
    let active: Vec<VisualFactor> = groups
        .values()
        .flat_map(|v| v.iter().map(|&i| problem.visual[i]))
        .collect();
    if active.len() < config.min_visual_factors {
        return Err(Error::InsufficientFactors {
            frames: n_frames,
            visual: active.len(),
        });
    }
    for fac in &problem.imu {
        if initial.slot(fac.from).is_none() || initial.slot(fac.to).is_none() {
            return Err(Error::IndexMismatch(format!(
                "IMU factor {}->{} outside window",
                fac.from, fac.to
            )));
        }
    }
    let td_info = td_information(&active);
    let anchors = groups.keys().map(|f| (*f, initial.points[f])).collect();
    let clamp = config.td_clamp.unwrap_or(0.5 * rig.frame_interval());
    let solver = Solver {
        problem,
        rig,
        config,
        layout: Layout::new(n_frames),
        groups,
        anchors,
        frozen: td_info < config.td_min_information
            || td_info
                < config.td_min_snr * td_noise_information(&active, config.pixel_noise_sigma),
        clamp,
    };

    let mut state = initial.clone();
    let mut td_clamped = false;
    if state.td.abs() > clamp {
        state.td = state.td.clamp(-clamp, clamp);
        td_clamped = true;
    }
    // The compensated cost can sit near zero at the optimum, so progress is
    // judged against the residual count as well.
    let cost_scale = 2.0 * active.len() as f64;
    let mut cost = solver.cost(&state);
    let mut trace = vec![cost];
    let mut lambda = config.initial_lambda;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut diverged = !cost.is_finite();

    'outer: while iterations < config.max_iterations && !diverged {
        if cost.abs() <= 1e-20 {
            break;
        }
        let sys = solver.linearize(&state);
        loop {
            let Some(step) = solver.step(&sys, lambda) else {
                lambda *= 10.0;
                if lambda > config.max_lambda {
                    diverged = true;
                    break 'outer;
                }
                continue;
            };
            if step.predicted <= 1e-15 * cost.abs().max(cost_scale) {
                break 'outer;
            }
            let (cand, clamped) = solver.apply(&state, &sys, &step);
            let c = solver.cost(&cand);
            if c.is_finite() && c < cost {
                let rel = (cost - c) / cost.abs().max(cost_scale);
                // Gain ratio update of the damping.
                let rho = (cost - c) / step.predicted;
                lambda = (lambda * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3))).max(1e-12);
                nu = 2.0;
                state = cand;
                td_clamped |= clamped;
                cost = c;
                trace.push(cost);
                iterations += 1;
                if rel < config.relative_tolerance {
                    break 'outer;
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > config.max_lambda {
                diverged = step.predicted > 1e-6 * cost.abs().max(cost_scale);
                break 'outer;
            }
        }
    }

    let td_variance = solver.td_variance(&state);
    Ok(SolveResult {
        state,
        cost_trace: trace,
        iterations,
        diverged,
        td_frozen: solver.frozen,
        td_clamped,
        td_variance,
        td_information: td_info,
        active_visual: active.len(),
    })
}

/// Camera-frame position of a world point as seen from a body state.
pub fn camera_point(rig: &SensorRig, body: &FrameState, point: &Vector3<f64>) -> Vector3<f64> {
    rig.cam_from_imu()
        .transform(&(body.rot.inverse() * (point - body.pos)))
}
