//! Central finite-difference checks of analytic gradients.

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::estimator::{
    preintegrate_imu, visual_residual, FrameState, ImuFactor, VelocitySource, VisualFactor,
};
use crate::geometry::exp_so3;
use crate::nets::{LstmModel, MlpModel, Sample, SeqSample, Trainable};
use crate::sim::{ImuSample, SensorRig};

pub const FD_STEP: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between the analytic parameter gradient of the
/// MSE loss and its central finite difference.
pub fn grad_check<M: Trainable + Clone>(model: &M, data: &[M::Sample]) -> f64 {
    let (_, grad) = model.loss_and_grad(data);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let plus = probe.loss(data);
        probe.params_mut()[i] = orig - FD_STEP;
        let minus = probe.loss(data);
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad[i], numeric, 1e-4));
    }
    worst
}

/// Small regression batch for an MLP with 3 inputs and 2 outputs.
pub fn mlp_batch() -> Vec<Sample> {
    (0..8)
        .map(|i| {
            let t = i as f64 / 7.0;
            Sample::new(vec![t, 1.0 - t, (3.0 * t).sin()], vec![t * t, -t])
        })
        .collect()
}

/// Three sequences of six steps with a target at every step.
pub fn seq_batch(input: usize, output: usize) -> Vec<SeqSample> {
    (0..3)
        .map(|s| {
            let inputs: Vec<Vec<f64>> = (0..6)
                .map(|k| {
                    (0..input)
                        .map(|d| ((s + k + d) as f64 * 0.37).sin())
                        .collect()
                })
                .collect();
            let targets = (0..6)
                .map(|k| {
                    Some(
                        (0..output)
                            .map(|d| ((s * k + d) as f64 * 0.21).cos())
                            .collect(),
                    )
                })
                .collect();
            SeqSample { inputs, targets }
        })
        .collect()
}

/// Pass threshold for every entry of [`gradient_suite`].
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < GRAD_TOLERANCE
    }
}

/// Runs every analytic-derivative check with seeded inputs. The td entry is
/// the largest absolute deviation of the offset Jacobian from `-V`.
pub fn gradient_suite(seed: u64) -> Vec<CheckResult> {
    let (visual, td_dev) = visual_jacobian_check(seed, 20);
    vec![
        CheckResult {
            name: "mlp 3-5-5-2",
            max_error: grad_check(&MlpModel::new(&[3, 5, 5, 2], seed), &mlp_batch()),
        },
        CheckResult {
            name: "lstm 2-2-2 (its)",
            max_error: grad_check(&LstmModel::new(2, 2, 2, seed), &seq_batch(2, 2)),
        },
        CheckResult {
            name: "lstm 1-2-1 (tpn)",
            max_error: grad_check(&LstmModel::new(1, 2, 1, seed), &seq_batch(1, 1)),
        },
        CheckResult {
            name: "visual residual",
            max_error: visual,
        },
        CheckResult {
            name: "visual d/dtd = -V",
            max_error: td_dev,
        },
        CheckResult {
            name: "imu factor",
            max_error: imu_jacobian_check(seed, 20),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mlp() {
        assert!(grad_check(&MlpModel::zeros(&[3, 5, 5, 2]), &mlp_batch()) < 1e-5);
    }

    #[test]
    fn random_mlp() {
        assert!(grad_check(&MlpModel::new(&[3, 5, 5, 2], 42), &mlp_batch()) < 1e-4);
    }

    #[test]
    fn recurrent_models() {
        let e1 = grad_check(&LstmModel::new(2, 2, 2, 42), &seq_batch(2, 2));
        let e2 = grad_check(&LstmModel::new(1, 2, 1, 43), &seq_batch(1, 1));
        assert!(e1 < 1e-4 && e2 < 1e-4, "{e1} {e2}");
    }

    #[test]
    fn suite_passes() {
        for r in gradient_suite(1) {
            assert!(r.passed(), "{r:?}");
        }
    }
}

fn max_matrix_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>, floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| relative_error(*a, *n, floor))
        .fold(0.0, f64::max)
}

fn random_state(rng: &mut ChaCha8Rng, frame: usize) -> FrameState {
    let v = |rng: &mut ChaCha8Rng, s: f64| {
        Vector3::new(
            rng.random_range(-s..s),
            rng.random_range(-s..s),
            rng.random_range(-s..s),
        )
    };
    FrameState {
        frame,
        rot: exp_so3(&v(rng, 1.0)),
        pos: v(rng, 2.0),
        vel: v(rng, 3.0),
    }
}

fn perturb(fs: &FrameState, block: usize, d: usize, h: f64) -> FrameState {
    let mut e = Vector3::zeros();
    e[d] = h;
    let mut out = *fs;
    match block {
        0 => out.rot = fs.rot * exp_so3(&e),
        1 => out.pos += e,
        _ => out.vel += e,
    }
    out
}

/// Largest relative error of the visual residual Jacobians (rotation,
/// position, point, td) against central differences on seeded random
/// configurations. Also returns the largest deviation of the td Jacobian
/// from `-V`.
pub fn visual_jacobian_check(seed: u64, trials: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = SensorRig::default();
    let cam = rig.cam_from_imu();
    let mut worst: f64 = 0.0;
    let mut td_dev: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let body = random_state(&mut rng, 0);
        // A point in front of the camera.
        let p_cam = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(2.0..8.0),
        );
        let point = body.pos + body.rot * cam.inverse().transform(&p_cam);
        let factor = VisualFactor {
            feature: 0,
            frame: 0,
            pixel: Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
            velocity: Vector2::new(
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            ),
            source: VelocitySource::ConstantSpeed,
            sigma: 1.0,
            velocity_noise: None,
        };
        let td = rng.random_range(-0.02..0.02);
        let eval = |b: &FrameState, p: &Vector3<f64>, t: f64| {
            visual_residual(&factor, b, p, t, &cam, &rig.intrinsics)
                .expect("point in front")
                .residual
        };
        let e = visual_residual(&factor, &body, &point, td, &cam, &rig.intrinsics).unwrap();
        let mut analytic = DMatrix::zeros(2, 10);
        analytic.view_mut((0, 0), (2, 3)).copy_from(&e.d_rot);
        analytic.view_mut((0, 3), (2, 3)).copy_from(&e.d_pos);
        analytic.view_mut((0, 6), (2, 3)).copy_from(&e.d_point);
        analytic.view_mut((0, 9), (2, 1)).copy_from(&e.d_td);
        let mut numeric = DMatrix::zeros(2, 10);
        for c in 0..10 {
            let h = FD_STEP;
            let (plus, minus) = match c {
                0..=5 => {
                    let (blk, d) = (c / 3, c % 3);
                    (
                        eval(&perturb(&body, blk, d, h), &point, td),
                        eval(&perturb(&body, blk, d, -h), &point, td),
                    )
                }
                6..=8 => {
                    let mut e = Vector3::zeros();
                    e[c - 6] = h;
                    (eval(&body, &(point + e), td), eval(&body, &(point - e), td))
                }
                _ => (eval(&body, &point, td + h), eval(&body, &point, td - h)),
            };
            numeric.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        worst = worst.max(max_matrix_error(&analytic, &numeric, 1.0));
        td_dev = td_dev.max((e.d_td + factor.velocity).norm());
        done += 1;
    }
    (worst, td_dev)
}

/// Largest relative error of the IMU factor Jacobian against central
/// differences on seeded random states and preintegrated readings.
pub fn imu_jacobian_check(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Vector3::new(0.0, 0.0, -9.81);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let samples: Vec<ImuSample> = (0..=10)
            .map(|i| ImuSample {
                t: i as f64 * 0.005,
                gyro: Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ),
                accel: Vector3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(5.0..15.0),
                ),
            })
            .collect();
        let pre = preintegrate_imu(&samples, 0.0, 0.05, 1e-3, 1e-2).expect("covered interval");
        let fac = ImuFactor::new(0, 1, pre, [1e-8; 3]);
        let xi = random_state(&mut rng, 0);
        // Keep the relative rotation moderate so Log stays away from pi.
        let mut xj = pre.propagate(&xi, &g, 1);
        xj.rot = xj.rot * exp_so3(&Vector3::new(0.1, -0.05, 0.08));
        xj.pos += Vector3::new(0.05, 0.02, -0.03);
        xj.vel += Vector3::new(-0.2, 0.1, 0.3);
        let (_, j) = fac.evaluate(&xi, &xj, &g, true);
        let analytic = DMatrix::from_iterator(9, 18, j.iter().copied());
        let mut numeric = DMatrix::zeros(9, 18);
        for c in 0..18 {
            let (frame, blk, d) = (c / 9, (c % 9) / 3, c % 3);
            let pert = |h: f64| {
                if frame == 0 {
                    fac.residual(&perturb(&xi, blk, d, h), &xj, &g)
                } else {
                    fac.residual(&xi, &perturb(&xj, blk, d, h), &g)
                }
            };
            let col = (pert(FD_STEP) - pert(-FD_STEP)) / (2.0 * FD_STEP);
            numeric.set_column(c, &col);
        }
        worst = worst.max(max_matrix_error(&analytic, &numeric, 1.0));
    }
    worst
}

#[cfg(test)]
mod estimator_tests {
    use super::*;

    #[test]
    fn visual_jacobians() {
        let (err, td_dev) = visual_jacobian_check(5, 20);
        assert!(err < 1e-4, "{err}");
        assert_eq!(td_dev, 0.0);
    }

    #[test]
    fn imu_jacobians() {
        let err = imu_jacobian_check(6, 20);
        assert!(err < 1e-4, "{err}");
    }
}
