//! Experiment engine: determinism, paired draws and degenerate regimes.

use icad::config::Profile;
use icad::detect::{run_detector, DetectorConfig, Estimator, Mode, XPenalty};
use icad::harness::{build_problem, draw, run_experiment, DetectorKind, ExperimentSpec, PointContext, SweepVar};

fn small() -> ExperimentSpec {
    let mut s = Profile::Desk.spec();
    s.base.n0 = 24;
    s.base.n_neighbor = 12;
    s.base.l = 10;
    s.base.m = 6;
    s.base.lambda = 0.00005;
    s.realizations = 6;
    s.seed = 11;
    s.detectors = vec![
        DetectorKind::ML_NONCOOP,
        DetectorKind::MAP_NONCOOP,
        DetectorKind::ML_SINGLE,
    ];
    s
}

#[test]
fn same_seed_gives_identical_csv_for_any_worker_count() {
    let mut s = small();
    s.sweep.variable = SweepVar::L;
    s.sweep.values = vec![8.0, 10.0];
    let a = run_experiment(&s, 1).unwrap().to_csv().unwrap();
    let b = run_experiment(&s, 1).unwrap().to_csv().unwrap();
    let c = run_experiment(&s, 3).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    s.seed += 1;
    assert_ne!(run_experiment(&s, 1).unwrap().to_csv().unwrap(), a);
}

#[test]
fn detector_outputs_do_not_depend_on_the_detector_list() {
    let s = small();
    let full = run_experiment(&s, 1).unwrap();
    let mut alone = s.clone();
    alone.detectors = vec![DetectorKind::MAP_NONCOOP];
    let one = run_experiment(&alone, 1).unwrap();
    for (x, y) in full.points[0].outcomes.iter().zip(&one.points[0].outcomes) {
        assert_eq!(x.truth, y.truth);
        assert_eq!(x.outcomes[1].soft, y.outcomes[0].soft);
    }
}

#[test]
fn interference_free_single_cell_matches_hand_built_baseline() {
    let mut s = small();
    s.base.lambda = 0.0;
    s.base.n_neighbor = 0;
    s.detectors = vec![DetectorKind::ML_SINGLE];
    let out = run_experiment(&s, 1).unwrap();
    let (base, prior) = s.point(0.0).unwrap();
    let ctx = PointContext::new(base, prior, false).unwrap();
    for o in &out.points[0].outcomes {
        let d = draw(&ctx, s.seed, o.index, 1).unwrap();
        assert_eq!(d.truth(), o.truth.as_slice());
        let mut p = build_problem(&ctx, DetectorKind::ML_NONCOOP, &d).unwrap();
        assert_eq!((p.mode, p.estimator), (Mode::Noncoop, Estimator::Ml));
        assert_eq!(p.x_priors, vec![XPenalty::NONE]);
        p.freeze_x = true;
        let r = run_detector(&p, &DetectorConfig::default()).unwrap();
        assert!(r.x[0].iter().all(|&v| v == 0.0));
        assert_eq!(o.outcomes[0].soft.as_ref().unwrap(), &r.a);
    }
}

#[test]
fn no_active_devices_gives_zero_error_above_one() {
    let mut s = small();
    s.base.p_a = 0.0;
    s.detectors = vec![DetectorKind::ML_NONCOOP];
    s.sweep.variable = SweepVar::Theta;
    s.sweep.values = vec![0.0, 0.5, 1.05];
    let out = run_experiment(&s, 1).unwrap();
    assert!(out.points[0].outcomes.iter().all(|o| o.truth.iter().all(|&t| !t)));
    let at = |v: f64| out.row(DetectorKind::ML_NONCOOP, v).unwrap();
    assert_eq!(at(0.0).p_err, 1.0);
    assert_eq!(at(1.05).p_err, 0.0);
    assert_eq!(at(1.05).p_miss, 0.0);
}

#[test]
fn theta_sweep_rows_share_realizations() {
    let mut s = small();
    s.sweep.variable = SweepVar::Theta;
    s.sweep.values = vec![0.0, 0.3, 1.05];
    let out = run_experiment(&s, 1).unwrap();
    assert_eq!(out.points.len(), 1);
    assert_eq!(out.rows.len(), 3 * s.detectors.len());
    let p_hat = {
        let (a, n) = out.points[0].outcomes.iter().fold((0usize, 0usize), |(a, n), o| {
            (a + o.truth.iter().filter(|&&t| t).count(), n + o.truth.len())
        });
        a as f64 / n as f64
    };
    for det in &s.detectors {
        assert_eq!(out.row(*det, 0.0).unwrap().p_err, 1.0 - p_hat);
        assert_eq!(out.row(*det, 1.05).unwrap().p_err, p_hat);
        let mid = out.row(*det, 0.3).unwrap();
        assert_eq!(mid.theta_star, 0.3);
    }
}

#[test]
fn invalid_sweeps_are_rejected() {
    let mut s = small();
    s.sweep.variable = SweepVar::L;
    s.sweep.values = vec![8.5];
    assert!(run_experiment(&s, 1).is_err());
    let mut s = small();
    s.sweep.variable = SweepVar::Eta;
    s.sweep.values = vec![0.5];
    assert!(run_experiment(&s, 1).is_err(), "eta needs the pairs prior");
    let mut s = small();
    s.base.p_a = 0.0;
    assert!(run_experiment(&s, 1).is_err(), "MAP needs 0 < p_a < 1");
}
