use nalgebra::Vector3;
use proptest::prelude::*;
use ton_calib::geometry::{exp_so3, Pose};
use ton_calib::metrics::{
    ate, cit, tpe, Alignment, CitConfig, OffsetSample, OffsetSeries, TrajectoryEstimate,
    TrajectorySample,
};

fn series(est: &[f64], truth: &[f64]) -> OffsetSeries {
    OffsetSeries::new(
        est.iter()
            .zip(truth)
            .enumerate()
            .map(|(index, (&estimate, &truth))| OffsetSample {
                index,
                estimate,
                truth,
            })
            .collect(),
    )
    .unwrap()
}

fn helix(n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let t = i as f64 * 0.3;
            Vector3::new(3.0 * t.cos(), 2.0 * t.sin(), 0.2 * t)
        })
        .collect()
}

proptest! {
    #[test]
    fn cit_is_monotone_in_eps1(
        est in prop::collection::vec(-0.03f64..0.03, 2..40),
        target in -0.02f64..0.02,
        eps1 in 1e-4f64..5e-3,
        grow in 1.0f64..4.0,
        eps2 in 1e-4f64..5e-3,
    ) {
        let s = series(&est, &vec![target; est.len()]);
        let tight = cit(&s, &CitConfig { target: Some(target), eps1, eps2 });
        let loose = cit(&s, &CitConfig { target: Some(target), eps1: eps1 * grow, eps2 });
        match (tight, loose) {
            (Some(a), Some(b)) => prop_assert!(b <= a),
            (Some(_), None) => prop_assert!(false, "looser eps1 lost convergence"),
            _ => {}
        }
    }

    #[test]
    fn tpe_doubles_exactly(
        err in prop::collection::vec(-0.02f64..0.02, 1..30),
        vel in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 30),
    ) {
        let n = err.len();
        let traj = TrajectoryEstimate::new(
            (0..n)
                .map(|i| TrajectorySample::at_rest(i, Vector3::zeros()).with_velocity(Vector3::from(vel[i])))
                .collect(),
        )
        .unwrap();
        let zero = vec![0.0; n];
        let doubled: Vec<f64> = err.iter().map(|e| 2.0 * e).collect();
        let one = tpe(&series(&err, &zero), &traj).unwrap();
        let two = tpe(&series(&doubled, &zero), &traj).unwrap();
        for (a, b) in one.error.iter().zip(&two.error) {
            prop_assert_eq!(*b, 2.0 * a);
        }
        prop_assert_eq!(two.rmse, 2.0 * one.rmse);
    }

    #[test]
    fn rigid_ate_ignores_rigid_transforms(
        phi in prop::array::uniform3(-3.0f64..3.0),
        shift in prop::array::uniform3(-50.0f64..50.0),
        noise in prop::collection::vec(prop::array::uniform3(-0.1f64..0.1), 40),
    ) {
        let truth = helix(40);
        let samples: Vec<TrajectorySample> = truth
            .iter()
            .zip(&noise)
            .enumerate()
            .map(|(i, (p, n))| {
                let mut s = TrajectorySample::at_rest(i, *p);
                s.est = Pose::new(s.est.rot, p + Vector3::from(*n));
                s
            })
            .collect();
        let base = TrajectoryEstimate::new(samples).unwrap();
        let moved = base.transformed(&Pose::new(exp_so3(&Vector3::from(phi)), Vector3::from(shift)));
        let a = ate(&base, Alignment::Rigid);
        let b = ate(&moved, Alignment::Rigid);
        prop_assert!((a.ape_rmse - b.ape_rmse).abs() <= 1e-9);
    }
}

#[test]
fn cit_examples() {
    let cfg = CitConfig {
        target: Some(2e-3),
        eps1: 1e-4,
        eps2: 1e-4,
    };
    let est = [5e-3, 3e-3, 2.05e-3, 2.02e-3, 2e-3];
    assert_eq!(cit(&series(&est, &[2e-3; 5]), &cfg), Some(3));
    assert_eq!(cit(&series(&[2e-3; 4], &[2e-3; 4]), &cfg), Some(1));
    assert_eq!(cit(&series(&[9e-3; 4], &[2e-3; 4]), &cfg), None);
}

#[test]
fn tpe_arithmetic() {
    let traj =
        TrajectoryEstimate::new(vec![TrajectorySample::at_rest(0, Vector3::zeros())
            .with_velocity(Vector3::new(2.0, 0.0, 0.0))])
        .unwrap();
    let r = tpe(&series(&[0.015], &[0.010]), &traj).unwrap();
    assert!((r.error[0] - Vector3::new(0.010, 0.0, 0.0)).norm() < 1e-15);
}

#[test]
fn ate_examples() {
    let truth = helix(30);
    let exact = TrajectoryEstimate::new(
        truth
            .iter()
            .enumerate()
            .map(|(i, p)| TrajectorySample::at_rest(i, *p))
            .collect(),
    )
    .unwrap();
    let r = ate(&exact, Alignment::Rigid);
    assert!(r.ape_rmse < 1e-12 && r.are_rmse < 1e-9);

    let shifted = exact.transformed(&Pose::new(
        exp_so3(&Vector3::new(0.3, -0.2, 1.1)),
        Vector3::new(4.0, -2.0, 1.0),
    ));
    assert!(ate(&shifted, Alignment::Rigid).ape_rmse < 1e-9);

    let offset: Vec<TrajectorySample> = truth
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut s = TrajectorySample::at_rest(i, *p);
            s.est = Pose::new(s.est.rot, p + Vector3::new(0.1, 0.0, 0.0));
            s
        })
        .collect();
    let r = ate(&TrajectoryEstimate::new(offset).unwrap(), Alignment::None);
    assert!((r.ape_rmse - 0.1).abs() < 1e-12);
}

#[test]
fn collinear_alignment_falls_back() {
    let line: Vec<TrajectorySample> = (0..10)
        .map(|i| TrajectorySample::at_rest(i, Vector3::new(i as f64, 0.0, 0.0)))
        .collect();
    let r = ate(&TrajectoryEstimate::new(line).unwrap(), Alignment::Rigid);
    assert!(r.alignment_fallback);
    assert_eq!(r.alignment, Alignment::None);
}
