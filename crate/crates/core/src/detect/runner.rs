//! Coordinate descent with cached inverse covariances.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detect::problem::{DetectionProblem, Mode};
use crate::detect::steps::{
    a_objective, coop_a_objective, coop_a_step, map_a_step_noncoop, map_x_step, x_objective, ApTerm,
};
use crate::error::{Error, Result};
use crate::linalg::{dot_conj, eye, inverse_hpd, inverse_residual, mat_vec_into, rank1_update_prepared, CMatrix};

/// Starting point of the interference powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XInit {
    Zero,
    /// Start at the prior mean (MAP) or zero (ML).
    Mean,
}

/// Iteration control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub max_iters: usize,
    /// Stop once the largest coordinate change of an iteration is below this.
    /// Interference changes are measured in units of the noise power.
    pub tol: f64,
    /// Recompute the inverses from scratch every this many iterations (0 = never).
    pub refresh_every: usize,
    /// Largest tolerated `‖Σ⁻¹Σ − I‖_F/√L` of a cached inverse.
    pub drift_limit: f64,
    /// Initial activity of every device.
    pub init_a: f64,
    pub init_x: XInit,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_iters: 50,
            tol: 1e-6,
            refresh_every: 10,
            drift_limit: 1e-6,
            init_a: 0.0,
            init_x: XInit::Zero,
        }
    }
}

/// Which coordinate a step moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Activity(usize),
    Interference { ap: usize, ell: usize },
}

/// One accepted coordinate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub coord: Coord,
    /// Increment applied.
    pub d: f64,
    /// Predicted objective change.
    pub delta: f64,
    /// Prior slope used (activity steps).
    pub slope: f64,
}

/// Callback invoked after every coordinate step.
pub trait StepObserver {
    fn on_step(&mut self, problem: &DetectionProblem, state: &DetectorState, step: &StepRecord) -> Result<()>;
}

impl StepObserver for () {
    fn on_step(&mut self, _: &DetectionProblem, _: &DetectorState, _: &StepRecord) -> Result<()> {
        Ok(())
    }
}

/// Current iterate plus cached inverses.
#[derive(Debug, Clone)]
pub struct DetectorState {
    pub a: Vec<f64>,
    /// `x[j][ℓ]`.
    pub x: Vec<Vec<f64>>,
    /// Cached `Σ_j⁻¹`.
    pub inv: Vec<CMatrix>,
    /// Objective tracked through the step predictions.
    pub objective: f64,
    pub iteration: usize,
}

/// Outcome of a detector run.
#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub a: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Objective before the first iteration and after each one.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
    /// Largest `‖Σ⁻¹Σ − I‖_F/√L` over APs at the end of the run.
    pub final_drift: f64,
}

/// Gains below this are treated as beyond reach.
const NEGLIGIBLE_GAIN: f64 = 1e-300;

/// Largest `|t|/(1+t)` for which a downdate by `t = d·scale·q` is applied in
/// place; beyond it the denominator cancels and the inverse is recomputed.
const MAX_CANCELLATION: f64 = 100.0;

fn cancels(t: f64) -> bool {
    t < 0.0 && -t > MAX_CANCELLATION * (1.0 + t)
}

/// Coordinate-descent engine bound to one problem.
pub struct Detector<'p> {
    pub problem: &'p DetectionProblem,
    pub state: DetectorState,
    d_max: f64,
    scratch_u: Vec<Vec<Complex64>>,
    scratch_v: Vec<Complex64>,
}

impl<'p> Detector<'p> {
    /// Validates the problem and builds the initial state.
    pub fn new(problem: &'p DetectionProblem, cfg: &DetectorConfig) -> Result<Self> {
        problem.validate()?;
        if !(0.0..=1.0).contains(&cfg.init_a) {
            return Err(Error::param(
                "init_a",
                format!("must lie in [0, 1], got {}", cfg.init_a),
            ));
        }
        let n = problem.num_devices();
        let l = problem.len();
        let u = problem.num_aps();
        let a = vec![cfg.init_a; n];
        let x: Vec<Vec<f64>> = (0..u)
            .map(|j| {
                let v = match (cfg.init_x, problem.estimator, problem.freeze_x) {
                    (_, _, true) => 0.0,
                    (XInit::Mean, crate::detect::Estimator::Map, _) => problem.x_priors[j].mean.max(0.0),
                    _ => 0.0,
                };
                vec![v; l]
            })
            .collect();
        let inv = if cfg.init_a == 0.0 && x.iter().all(|xj| xj.iter().all(|&v| v == 0.0)) {
            vec![eye(l) * Complex64::new(1.0 / problem.noise, 0.0); u]
        } else {
            (0..u)
                .map(|j| inverse_hpd(&problem.model_covariance(j, &a, &x[j])))
                .collect::<Result<_>>()?
        };
        let objective = problem.objective(&a, &x)?;
        let mean_scale = problem.x_priors.iter().map(|p| p.mean.abs()).fold(0.0, f64::max);
        let tr = problem
            .covs
            .iter()
            .map(|c| (0..l).map(|k| c[(k, k)].re).sum::<f64>() / l as f64)
            .fold(0.0, f64::max);
        Ok(Detector {
            problem,
            state: DetectorState {
                a,
                x,
                inv,
                objective,
                iteration: 0,
            },
            d_max: 1e3 * (tr + mean_scale + 1.0),
            scratch_u: vec![vec![Complex64::new(0.0, 0.0); l]; u],
            scratch_v: vec![Complex64::new(0.0, 0.0); l],
        })
    }

    /// `(q, s)` with `u = Σ_j⁻¹v` left in `scratch_u[j]`.
    fn summaries(&mut self, j: usize, v: &[Complex64]) -> (f64, f64) {
        let u = &mut self.scratch_u[j];
        mat_vec_into(&self.state.inv[j], v, u);
        let q = dot_conj(v, u).re;
        mat_vec_into(&self.problem.covs[j], u, &mut self.scratch_v);
        let s = dot_conj(u, &self.scratch_v).re;
        (q, s)
    }

    /// Exact minimization along activity `i`; returns the applied increment and objective change.
    pub fn update_a(&mut self, i: usize) -> Result<(f64, f64, f64)> {
        let p = self.problem;
        let nap = p.num_aps();
        let ai = self.state.a[i];
        let gains: Vec<f64> = (0..nap).map(|j| p.gains[j][i]).collect();
        if gains.iter().all(|&g| g <= NEGLIGIBLE_GAIN) {
            if ai != 0.0 {
                log::debug!("device {i} has negligible gain to every AP; pinning its activity at 0");
            }
            self.state.a[i] = 0.0;
            return Ok((0.0, 0.0, 0.0));
        }
        let pilot = p.pilots.column(i);
        let mut qs = Vec::with_capacity(nap);
        for j in 0..nap {
            qs.push(self.summaries(j, pilot));
        }
        let slope = p.prior_slope(&self.state.a, i);
        let (d, delta) = match p.mode {
            Mode::Noncoop => {
                let (q, s) = qs[0];
                let d = map_a_step_noncoop(q, s, gains[0], ai, slope)?;
                (d, a_objective(d, q, s, gains[0], slope))
            }
            Mode::Coop => {
                let terms: Vec<ApTerm> = qs
                    .iter()
                    .zip(&gains)
                    .map(|(&(q, s), &g)| ApTerm { b: g * q, s: g * s })
                    .collect();
                let d = coop_a_step(&terms, ai, slope)?;
                (d, coop_a_objective(d, &terms, slope))
            }
        };
        if d != 0.0 {
            self.state.a[i] = if d == 1.0 - ai {
                1.0
            } else if d == -ai {
                0.0
            } else {
                (ai + d).clamp(0.0, 1.0)
            };
            for j in 0..nap {
                if cancels(d * gains[j] * qs[j].0) {
                    self.reinvert(j)?;
                } else {
                    rank1_update_prepared(&mut self.state.inv[j], &self.scratch_u[j], qs[j].0, gains[j], d)?;
                }
            }
            self.state.objective += delta;
        }
        Ok((d, delta, slope))
    }

    /// Exact minimization along interference coordinate `ℓ` of AP `j`.
    pub fn update_x(&mut self, j: usize, ell: usize) -> Result<(f64, f64)> {
        let p = self.problem;
        let xv = self.state.x[j][ell];
        let w: Vec<Complex64> = self.state.inv[j].column(ell).iter().copied().collect();
        let q = w[ell].re;
        mat_vec_into(&p.covs[j], &w, &mut self.scratch_v);
        let s = dot_conj(&w, &self.scratch_v).re;
        let pen = match p.estimator {
            crate::detect::Estimator::Map => p.x_priors[j],
            crate::detect::Estimator::Ml => crate::detect::steps::XPenalty::NONE,
        };
        let d = map_x_step(q, s, xv, pen, self.d_max)?;
        let delta = x_objective(d, q, s, xv, pen);
        if d != 0.0 {
            self.state.x[j][ell] = if d == -xv { 0.0 } else { (xv + d).max(0.0) };
            if cancels(d * q) {
                self.reinvert(j)?;
            } else {
                rank1_update_prepared(&mut self.state.inv[j], &w, q, 1.0, d)?;
            }
            self.state.objective += delta;
        }
        Ok((d, delta))
    }

    /// Replaces the cached inverse of AP `j` by a direct one.
    fn reinvert(&mut self, j: usize) -> Result<()> {
        let sigma = self.problem.model_covariance(j, &self.state.a, &self.state.x[j]);
        self.state.inv[j] = inverse_hpd(&sigma)?;
        Ok(())
    }

    /// `max_j ‖Σ_j⁻¹Σ_j − I‖_F/√L` of the cached inverses.
    pub fn drift(&self) -> f64 {
        (0..self.problem.num_aps())
            .map(|j| {
                let sigma = self.problem.model_covariance(j, &self.state.a, &self.state.x[j]);
                inverse_residual(&self.state.inv[j], &sigma)
            })
            .fold(0.0, f64::max)
    }

    /// Replaces the cached inverses and tracked objective with fresh ones, failing if the inverses had drifted beyond `limit`.
    pub fn refresh(&mut self, limit: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for j in 0..self.problem.num_aps() {
            let sigma = self.problem.model_covariance(j, &self.state.a, &self.state.x[j]);
            let drift = inverse_residual(&self.state.inv[j], &sigma);
            worst = worst.max(drift);
            self.state.inv[j] = inverse_hpd(&sigma)?;
        }
        self.state.objective = self.problem.objective(&self.state.a, &self.state.x)?;
        if worst > limit {
            return Err(Error::InverseDrift {
                drift: worst,
                limit,
                iteration: self.state.iteration,
            });
        }
        Ok(worst)
    }

    /// One sweep over all activities, then all interference powers; returns the largest change.
    pub fn iterate(&mut self, observer: &mut dyn StepObserver) -> Result<f64> {
        let p = self.problem;
        let mut change = 0.0f64;
        let it = self.state.iteration;
        for i in 0..p.num_devices() {
            let (d, delta, slope) = self.update_a(i)?;
            change = change.max(d.abs());
            observer.on_step(
                p,
                &self.state,
                &StepRecord {
                    iteration: it,
                    coord: Coord::Activity(i),
                    d,
                    delta,
                    slope,
                },
            )?;
        }
        if !p.freeze_x {
            for ell in 0..p.len() {
                for j in 0..p.num_aps() {
                    let (d, delta) = self.update_x(j, ell)?;
                    change = change.max(d.abs() / p.noise);
                    observer.on_step(
                        p,
                        &self.state,
                        &StepRecord {
                            iteration: it,
                            coord: Coord::Interference { ap: j, ell },
                            d,
                            delta,
                            slope: 0.0,
                        },
                    )?;
                }
            }
        }
        self.state.iteration += 1;
        Ok(change)
    }
}

/// Runs coordinate descent to convergence or the iteration cap.
pub fn run_detector(problem: &DetectionProblem, cfg: &DetectorConfig) -> Result<DetectionResult> {
    run_detector_observed(problem, cfg, &mut ())
}

/// [`run_detector`] with a per-step callback.
pub fn run_detector_observed(
    problem: &DetectionProblem,
    cfg: &DetectorConfig,
    observer: &mut dyn StepObserver,
) -> Result<DetectionResult> {
    let start = Instant::now();
    let mut det = Detector::new(problem, cfg)?;
    let mut trajectory = vec![det.state.objective];
    let mut converged = false;
    while det.state.iteration < cfg.max_iters {
        let change = det.iterate(observer)?;
        trajectory.push(det.state.objective);
        if cfg.refresh_every > 0 && det.state.iteration % cfg.refresh_every == 0 {
            det.refresh(cfg.drift_limit)?;
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let final_drift = det.drift();
    Ok(DetectionResult {
        iterations: det.state.iteration,
        a: det.state.a,
        x: det.state.x,
        trajectory,
        converged,
        wall_time: start.elapsed(),
        final_drift,
    })
}

/// Hard decisions `a_i ≥ θ`.
pub fn threshold(a: &[f64], theta: f64) -> Vec<bool> {
    a.iter().map(|&v| v >= theta).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{CellPrior, Estimator, XPenalty};
    use crate::priors::MvbPrior;
    use crate::signal::{gen_pilots, synthesize_ap, PilotSet};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, l: usize, n: usize, m: usize, mode: Mode, estimator: Estimator) -> DetectionProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pilots = gen_pilots(&mut rng, l, n).unwrap();
        let naps = if mode == Mode::Coop { 3 } else { 1 };
        let active: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
        let noise = 0.05;
        let mut gains = Vec::new();
        let mut covs = Vec::new();
        for _ in 0..naps {
            let g: Vec<f64> = (0..n).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
            covs.push(
                synthesize_ap(&pilots, &g, &active, m, noise, false, &mut rng)
                    .unwrap()
                    .cov,
            );
            gains.push(g);
        }
        let (priors, x_priors) = match estimator {
            Estimator::Map => (
                vec![CellPrior {
                    offset: 0,
                    prior: MvbPrior::pairs(n, 0.3, 0.4, 1e-6).unwrap(),
                }],
                vec![XPenalty { mean: 0.02, k: 40.0 }; naps],
            ),
            Estimator::Ml => (vec![], vec![XPenalty::NONE; naps]),
        };
        DetectionProblem {
            mode,
            estimator,
            pilots,
            gains,
            covs,
            noise,
            m,
            priors,
            x_priors,
            freeze_x: false,
        }
    }

    #[test]
    fn zero_signal_stays_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = 6;
        let noise = 0.1;
        let p = DetectionProblem {
            mode: Mode::Noncoop,
            estimator: Estimator::Ml,
            pilots: gen_pilots(&mut rng, l, 9).unwrap(),
            gains: vec![vec![1.0; 9]],
            covs: vec![eye(l) * Complex64::new(noise, 0.0)],
            noise,
            m: 4,
            priors: vec![],
            x_priors: vec![XPenalty::NONE],
            freeze_x: false,
        };
        let r = run_detector(&p, &DetectorConfig::default()).unwrap();
        // exact zero up to rounding in q and s
        assert!(r.a.iter().all(|&v| v.abs() < 1e-12));
        assert!(r.x[0].iter().all(|&v| v.abs() < 1e-12 * noise));
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        // a = 0, x = 0 objective is L·ln δ² + tr(Σ̂)/δ²
        let want = l as f64 * noise.ln() + l as f64;
        assert!((r.trajectory[0] - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn orthogonal_pilots_recover_activity() {
        let l = 8;
        let pilots = PilotSet {
            p: DMatrix::from_fn(l, l, |r, c| Complex64::new(if r == c { 2.0 } else { 0.0 }, 0.0)),
        };
        let active = [true, false, true, true, false, false, true, false];
        let gains = vec![1.0; l];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = 1e-3;
        let obs = synthesize_ap(&pilots, &gains, &active, 10_000, noise, false, &mut rng).unwrap();
        let p = DetectionProblem {
            mode: Mode::Noncoop,
            estimator: Estimator::Ml,
            pilots,
            gains: vec![gains],
            covs: vec![obs.cov],
            noise,
            m: 10_000,
            priors: vec![],
            x_priors: vec![XPenalty::NONE],
            freeze_x: true,
        };
        let r = run_detector(&p, &DetectorConfig::default()).unwrap();
        for (a, &t) in r.a.iter().zip(&active) {
            assert!((a - if t { 1.0 } else { 0.0 }).abs() < 0.05, "{a} vs {t}");
        }
    }

    /// Checks every step against the directly evaluated objective.
    struct Audit {
        prev: f64,
        worst_rise: f64,
        worst_track: f64,
    }

    impl StepObserver for Audit {
        fn on_step(&mut self, p: &DetectionProblem, s: &DetectorState, _: &StepRecord) -> Result<()> {
            let f = p.objective(&s.a, &s.x)?;
            assert!(s.a.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(s.x.iter().flatten().all(|&v| v >= 0.0));
            self.worst_rise = self.worst_rise.max((f - self.prev) / self.prev.abs());
            self.worst_track = self.worst_track.max((f - s.objective).abs() / f.abs());
            self.prev = f;
            Ok(())
        }
    }

    #[test]
    fn every_step_descends_for_every_detector() {
        for (k, (mode, est)) in [
            (Mode::Noncoop, Estimator::Ml),
            (Mode::Noncoop, Estimator::Map),
            (Mode::Coop, Estimator::Ml),
            (Mode::Coop, Estimator::Map),
        ]
        .into_iter()
        .enumerate()
        {
            let p = random_problem(10 + k as u64, 8, 12, 4, mode, est);
            let start = p.objective(&[0.0; 12], &vec![vec![0.0; 8]; p.num_aps()]).unwrap();
            let mut audit = Audit {
                prev: start,
                worst_rise: f64::NEG_INFINITY,
                worst_track: 0.0,
            };
            let r = run_detector_observed(&p, &DetectorConfig::default(), &mut audit).unwrap();
            assert!(audit.worst_rise <= 1e-9, "{mode:?} {est:?}: rise {}", audit.worst_rise);
            assert!(
                audit.worst_track < 1e-8,
                "{mode:?} {est:?}: tracking {}",
                audit.worst_track
            );
            assert!(r.final_drift < 1e-6);
            assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
        }
    }

    #[test]
    fn map_with_vanishing_prior_is_ml_bit_for_bit() {
        for mode in [Mode::Noncoop, Mode::Coop] {
            let ml = random_problem(3, 8, 12, 4, mode, Estimator::Ml);
            let mut map = ml.clone();
            map.estimator = Estimator::Map;
            map.priors = vec![CellPrior {
                offset: 0,
                prior: MvbPrior::general(12, vec![]).unwrap(),
            }];
            map.x_priors = vec![XPenalty { mean: 0.7, k: 0.0 }; ml.num_aps()];
            let a = run_detector(&ml, &DetectorConfig::default()).unwrap();
            let b = run_detector(&map, &DetectorConfig::default()).unwrap();
            assert_eq!(a.trajectory, b.trajectory);
            assert_eq!(a.a, b.a);
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn single_ap_coop_matches_noncoop() {
        let nc = random_problem(5, 8, 12, 4, Mode::Noncoop, Estimator::Ml);
        let mut c = nc.clone();
        c.mode = Mode::Coop;
        let a = run_detector(&nc, &DetectorConfig::default()).unwrap();
        let b = run_detector(&c, &DetectorConfig::default()).unwrap();
        assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (x, y) in a.trajectory.iter().zip(&b.trajectory) {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
        }
        for (x, y) in a.a.iter().zip(&b.a) {
            assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn negligible_gain_is_pinned() {
        let mut p = random_problem(8, 8, 12, 4, Mode::Noncoop, Estimator::Ml);
        p.gains[0][3] = 0.0;
        let r = run_detector(
            &p,
            &DetectorConfig {
                init_a: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.a[3], 0.0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold(&[0.2, 0.7], 0.5), vec![false, true]);
        assert_eq!(threshold(&[0.0, 0.3], 0.0), vec![true, true]);
        assert_eq!(threshold(&[0.99, 1.0], 1.0), vec![false, true]);
        assert_eq!(threshold(&[0.99, 1.0], 1.0 + 1e-12), vec![false, false]);
    }

    #[test]
    fn drift_is_reported_on_refresh() {
        let p = random_problem(9, 8, 12, 4, Mode::Noncoop, Estimator::Ml);
        let mut det = Detector::new(&p, &DetectorConfig::default()).unwrap();
        det.iterate(&mut ()).unwrap();
        det.state.inv[0][(0, 0)] += Complex64::new(1.0, 0.0);
        assert!(matches!(det.refresh(1e-6), Err(Error::InverseDrift { .. })));
        // the refresh replaced the inverse anyway
        assert!(det.drift() < 1e-10);
    }
}
