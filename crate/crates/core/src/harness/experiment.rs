//! Grid sweeps over pooled, paired realizations.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::realization::{run_realization, PointContext, RealizationOutcome};
use crate::harness::spec::{DetectorKind, ExperimentSpec, SweepVar};
use crate::harness::stats::{default_theta_grid, sweep_threshold_pooled, ErrorCounts};

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub detector: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub theta_star: f64,
    pub p_err: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub ci95: f64,
    /// Realizations that entered the statistics.
    pub realizations: usize,
    pub seed: u64,
}

/// Raw outcomes at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutput {
    pub value: f64,
    /// Ordered by realization index; draws that failed outright are absent.
    pub outcomes: Vec<RealizationOutcome>,
}

impl PointOutput {
    /// `(soft, truth)` of detector `det` over realizations where it succeeded.
    pub fn runs(&self, det: usize) -> Vec<(&[f64], &[bool])> {
        self.outcomes
            .iter()
            .filter_map(|o| {
                o.outcomes[det]
                    .soft
                    .as_ref()
                    .ok()
                    .map(|s| (s.as_slice(), o.truth.as_slice()))
            })
            .collect()
    }

    /// Per-realization error fractions of detector `det` at `theta`, over
    /// realizations where every detector succeeded (for paired tests).
    pub fn paired_errors(&self, det: usize, theta: f64) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.outcomes.iter().all(|d| d.soft.is_ok()))
            .map(|o| {
                let soft = o.outcomes[det].soft.as_ref().expect("filtered");
                ErrorCounts::at_threshold(soft, &o.truth, theta).p_err()
            })
            .collect()
    }
}

/// Rows plus raw outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub detectors: Vec<DetectorKind>,
    pub sweep_var: SweepVar,
    pub rows: Vec<Row>,
    pub points: Vec<PointOutput>,
    pub attempts: usize,
    pub aborts: usize,
}

impl ExperimentOutput {
    pub fn row(&self, det: DetectorKind, value: f64) -> Option<&Row> {
        let name = det.name();
        self.rows.iter().find(|r| r.detector == name && r.sweep_value == value)
    }

    pub fn detector_index(&self, det: DetectorKind) -> Option<usize> {
        self.detectors.iter().position(|&d| d == det)
    }

    pub fn abort_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.aborts as f64 / self.attempts as f64
        }
    }

    pub fn check_abort_rate(&self, limit: f64) -> Result<()> {
        if self.abort_rate() > limit {
            return Err(Error::AbortRate {
                aborted: self.aborts,
                total: self.attempts,
                limit,
            });
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

/// Reads rows written by [`rows_to_csv`].
pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(format!("{}: {e}", path.display())),
        _ => Error::InvalidInput(format!("{}: {e}", path.display())),
    })?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

fn draws(ctx: &PointContext, spec: &ExperimentSpec) -> Vec<std::result::Result<RealizationOutcome, String>> {
    (0..spec.realizations as u64)
        .into_par_iter()
        .map(|idx| {
            run_realization(ctx, &spec.detectors, &spec.detector, spec.seed, idx)
                .map_err(|e| format!("realization {idx}: {e}"))
        })
        .collect()
}

/// Runs the experiment on `workers` threads (0 = one per core).
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutput> {
    let out = run_experiment_unchecked(spec, workers)?;
    out.check_abort_rate(spec.max_abort_rate)?;
    Ok(out)
}

/// [`run_experiment`] without the abort-rate check.
pub fn run_experiment_unchecked(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    pool.install(|| run_experiment_inner(spec))
}

fn run_experiment_inner(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let nd = spec.detectors.len();
    let coop = spec.needs_coop();
    let theta_sweep = spec.sweep.variable == SweepVar::Theta;
    // a threshold sweep reuses one set of realizations for every grid value
    let values: Vec<f64> = if theta_sweep {
        vec![f64::NAN]
    } else {
        spec.sweep.values.clone()
    };
    let mut points = Vec::new();
    let mut attempts = 0;
    let mut aborts = 0;
    for &v in &values {
        let (base, prior) = spec.point(if v.is_nan() { 0.0 } else { v })?;
        let ctx = PointContext::new(base, prior, coop)?;
        log::info!("{} = {}: {} realizations", spec.sweep.variable, v, spec.realizations);
        let mut outcomes = Vec::with_capacity(spec.realizations);
        for r in draws(&ctx, spec) {
            attempts += nd;
            match r {
                Ok(o) => {
                    aborts += o.outcomes.iter().filter(|d| d.soft.is_err()).count();
                    outcomes.push(o);
                }
                Err(msg) => {
                    log::warn!("{msg}");
                    aborts += nd;
                }
            }
        }
        points.push(PointOutput { value: v, outcomes });
    }
    let grid = default_theta_grid();
    let mut rows = Vec::new();
    for (di, det) in spec.detectors.iter().enumerate() {
        for p in &points {
            let runs = p.runs(di);
            let emit = |theta: f64, value: f64, c: ErrorCounts| Row {
                detector: det.name(),
                sweep_var: spec.sweep.variable.as_str().to_string(),
                sweep_value: value,
                theta_star: theta,
                p_err: c.p_err(),
                p_miss: c.p_miss(),
                p_fa: c.p_fa(),
                ci95: c.ci95(),
                realizations: runs.len(),
                seed: spec.seed,
            };
            if theta_sweep {
                for &theta in &spec.sweep.values {
                    let c = crate::harness::stats::pooled_counts(runs.iter().copied(), theta);
                    rows.push(emit(theta, theta, c));
                }
            } else {
                let (theta, c) = if runs.is_empty() {
                    (f64::NAN, ErrorCounts::default())
                } else {
                    sweep_threshold_pooled(&runs, &grid)
                };
                rows.push(emit(theta, p.value, c));
            }
        }
    }
    Ok(ExperimentOutput {
        detectors: spec.detectors.clone(),
        sweep_var: spec.sweep.variable,
        rows,
        points,
        attempts,
        aborts,
    })
}
