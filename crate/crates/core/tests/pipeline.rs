use pkmdyn::batch::{run_trajectory, RunOptions};
use pkmdyn::fixtures;
use pkmdyn::oracle::{verify_model, FdConfig, VerifyOptions};
use pkmdyn::trajectory::TrajectorySpec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn roll_about_any_rotation_axis_verifies(
        axis in 0usize..3,
        lo in -0.4..-0.05f64,
        hi in 0.05..0.4f64,
        period in 0.5..2.0f64,
    ) {
        let model = fixtures::gsp();
        let spec = TrajectorySpec::Roll { theta_min: lo, theta_max: hi, period, axis };
        let traj = spec.build(&model).unwrap();
        let opts = VerifyOptions { samples: 6, ..Default::default() };
        let report = verify_model(&model, &traj, spec.duration(), &FdConfig::default(), &opts).unwrap();
        prop_assert!(report.pass(), "{:?}", report.failures().collect::<Vec<_>>());
    }

    #[test]
    fn point_to_point_moves_verify_on_the_planar_fixture(
        dx in -0.05..0.05f64,
        dy in -0.05..0.05f64,
        duration in 0.5..2.0f64,
    ) {
        let model = fixtures::planar();
        let spec = TrajectorySpec::PointToPoint {
            start: vec![0.0, 0.0],
            end: vec![dx, dy],
            duration,
        };
        let traj = spec.build(&model).unwrap();
        let opts = VerifyOptions { samples: 6, ..Default::default() };
        let report = verify_model(&model, &traj, duration, &FdConfig::default(), &opts).unwrap();
        prop_assert!(report.pass(), "{:?}", report.failures().collect::<Vec<_>>());
    }
}

#[test]
fn point_to_point_rows_start_and_end_at_rest() {
    let model = fixtures::gsp();
    let spec = TrajectorySpec::default_p2p(model.dof());
    let traj = spec.build(&model).unwrap();
    let rows = run_trajectory(&model, &traj, &RunOptions::new(0.0, spec.duration(), 500.0)).unwrap();
    let (first, last) = (&rows[0], rows.last().unwrap());
    for r in [first, last] {
        for k in 1..5 {
            assert!(r.theta_a[k].amax() < 1e-9, "order {k} at t = {}", r.t);
        }
        assert!(r.u_dot.amax() < 1e-9 && r.u_ddot.amax() < 1e-9);
    }
    // at rest the spring holds the static load
    assert!((&first.tau - &first.u).amax() < 1e-9 * (1.0 + first.u.amax()));
}
