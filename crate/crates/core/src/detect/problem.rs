//! Detection problem definition and the directly evaluated objective.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detect::steps::XPenalty;
use crate::error::{Error, Result};
use crate::linalg::{hermitize, logdet_plus_trace, CMatrix};
use crate::priors::{ApMoments, MvbPrior};
use crate::signal::PilotSet;

/// Whether AP 0 works alone or pools the observations of its six neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Noncoop,
    Coop,
}

/// Likelihood only, or likelihood plus activity and interference priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ml,
    Map,
}

/// Activity prior for a contiguous block of devices.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPrior {
    /// Index of the block's first device.
    pub offset: usize,
    pub prior: MvbPrior,
}

/// Everything a detector needs, fixed for the duration of a run.
#[derive(Debug, Clone)]
pub struct DetectionProblem {
    pub mode: Mode,
    pub estimator: Estimator,
    /// L×N pilots of the devices being detected.
    pub pilots: PilotSet,
    /// `gains[j][i]`: path loss from device `i` to AP `j`.
    pub gains: Vec<Vec<f64>>,
    /// Sample covariance at each AP.
    pub covs: Vec<CMatrix>,
    pub noise: f64,
    pub m: usize,
    /// Activity priors (MAP only); blocks must not overlap.
    pub priors: Vec<CellPrior>,
    /// Interference prior per AP (MAP only).
    pub x_priors: Vec<XPenalty>,
    /// Keep interference powers at zero.
    pub freeze_x: bool,
}

/// Converts Gaussian moments into the per-coordinate penalty `(x−μ)²/(2Mσ²)`.
///
/// Zero variance pins the coordinate at the mean.
pub fn penalty_from_moments(mom: &ApMoments, m: usize) -> XPenalty {
    if mom.var > 0.0 {
        XPenalty {
            mean: mom.mean,
            k: 1.0 / (mom.var * m as f64),
        }
    } else {
        XPenalty {
            mean: mom.mean,
            k: f64::INFINITY,
        }
    }
}

impl DetectionProblem {
    pub fn num_devices(&self) -> usize {
        self.pilots.num_devices()
    }

    pub fn num_aps(&self) -> usize {
        self.covs.len()
    }

    pub fn len(&self) -> usize {
        self.pilots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.is_empty()
    }

    /// Checks dimensions and value ranges.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_devices();
        let l = self.len();
        let u = self.num_aps();
        if u == 0 {
            return Err(Error::InvalidInput("detection problem has no AP".into()));
        }
        if self.mode == Mode::Noncoop && u != 1 {
            return Err(Error::InvalidInput(format!(
                "non-cooperative detection uses one AP, got {u}"
            )));
        }
        if self.gains.len() != u {
            return Err(Error::InvalidInput(format!(
                "{} gain rows for {u} APs",
                self.gains.len()
            )));
        }
        for (j, g) in self.gains.iter().enumerate() {
            if g.len() != n {
                return Err(Error::InvalidInput(format!(
                    "AP {j}: {} gains for {n} devices",
                    g.len()
                )));
            }
            if g.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "AP {j}: gains must be finite and non-negative"
                )));
            }
        }
        for (j, c) in self.covs.iter().enumerate() {
            if c.nrows() != l || c.ncols() != l {
                return Err(Error::InvalidInput(format!(
                    "AP {j}: covariance is {}x{}, expected {l}x{l}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(Error::param(
                "noise",
                format!("noise variance must be positive, got {}", self.noise),
            ));
        }
        if self.m == 0 {
            return Err(Error::param("M", "antenna count must be at least 1"));
        }
        if self.estimator == Estimator::Map {
            if self.x_priors.len() != u {
                return Err(Error::InvalidInput(format!(
                    "{} interference priors for {u} APs",
                    self.x_priors.len()
                )));
            }
            let mut covered = vec![false; n];
            for cp in &self.priors {
                let end = cp.offset + cp.prior.num_devices();
                if end > n {
                    return Err(Error::InvalidInput(format!(
                        "activity prior covers devices {}..{end} beyond {n}",
                        cp.offset
                    )));
                }
                for c in &mut covered[cp.offset..end] {
                    if *c {
                        return Err(Error::InvalidInput("activity priors overlap".into()));
                    }
                    *c = true;
                }
            }
        }
        Ok(())
    }

    /// Prior block containing device `i`, if any.
    pub fn prior_of(&self, i: usize) -> Option<&CellPrior> {
        self.priors
            .iter()
            .find(|cp| i >= cp.offset && i < cp.offset + cp.prior.num_devices())
    }

    /// Slope of the prior term along `a_i`, `(1/M) Σ_{ω∋i} c_ω Π_{k∈ω∖i} a_k`.
    pub fn prior_slope(&self, a: &[f64], i: usize) -> f64 {
        if self.estimator != Estimator::Map {
            return 0.0;
        }
        match self.prior_of(i) {
            Some(cp) => {
                let n = cp.prior.num_devices();
                cp.prior
                    .linear_coeff(&a[cp.offset..cp.offset + n], i - cp.offset, self.m)
            }
            None => 0.0,
        }
    }

    /// Model covariance `P diag(a ∘ γ_j) Pᴴ + diag(x_j) + δ²I` at AP `j`.
    pub fn model_covariance(&self, j: usize, a: &[f64], x: &[f64]) -> CMatrix {
        let l = self.len();
        let mut s = CMatrix::zeros(l, l);
        for (i, &ai) in a.iter().enumerate() {
            let w = ai * self.gains[j][i];
            if w == 0.0 {
                continue;
            }
            let p = self.pilots.column(i);
            for c in 0..l {
                let pc = p[c].conj() * w;
                for r in 0..l {
                    s[(r, c)] += p[r] * pc;
                }
            }
        }
        for k in 0..l {
            s[(k, k)] += Complex64::new(x[k] + self.noise, 0.0);
        }
        hermitize(&mut s);
        s
    }

    /// Objective at `(a, x)` by direct factorization; `x[j]` holds AP `j`'s powers.
    pub fn objective(&self, a: &[f64], x: &[Vec<f64>]) -> Result<f64> {
        let mut f = 0.0;
        for (j, xj) in x.iter().enumerate().take(self.num_aps()) {
            let sigma = self.model_covariance(j, a, xj);
            f += logdet_plus_trace(&sigma, &self.covs[j]).map_err(|_| {
                Error::NotPositiveDefinite(format!("model covariance at AP {j} is not positive definite"))
            })?;
        }
        if self.estimator == Estimator::Map {
            for (j, pen) in self.x_priors.iter().enumerate() {
                f += x[j].iter().map(|&v| pen.value(v)).sum::<f64>();
            }
            for cp in &self.priors {
                let n = cp.prior.num_devices();
                f -= cp.prior.log_score(&a[cp.offset..cp.offset + n]) / self.m as f64;
            }
        }
        Ok(f)
    }
}
