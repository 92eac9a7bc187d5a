//! Experiment description: base regime, prior, sweep and detector line-up.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorConfig, Estimator, Mode};
use crate::error::{Error, Result};
use crate::priors::MvbPrior;

/// Network and signal parameters of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseParams {
    /// Cell side length in meters.
    pub r: f64,
    /// Density of active out-of-region devices per square meter.
    pub lambda: f64,
    /// Marginal activity probability.
    pub p_a: f64,
    /// Devices in the typical cell.
    pub n0: usize,
    /// Devices in each of the six neighbor cells; 0 leaves them to the point process.
    pub n_neighbor: usize,
    pub alpha: f64,
    /// Pilot length.
    pub l: usize,
    /// Antennas per AP.
    pub m: usize,
    /// Noise variance; `None` means `R^(−α)/10`.
    pub noise: Option<f64>,
    /// Point-process truncation radius as a multiple of `R`.
    pub r_max_factor: f64,
    /// Relative tolerance of the moment quadrature.
    pub quad_tol: f64,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            r: 200.0,
            lambda: 0.00025,
            p_a: 0.05,
            n0: 500,
            n_neighbor: 500,
            alpha: 3.0,
            l: 40,
            m: 60,
            noise: None,
            r_max_factor: 10.0,
            quad_tol: 1e-8,
        }
    }
}

impl BaseParams {
    /// Noise variance after applying the default rule.
    pub fn noise_power(&self) -> f64 {
        self.noise.unwrap_or_else(|| self.r.powf(-self.alpha) / 10.0)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max_factor * self.r
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        };
        pos("base.r", self.r)?;
        pos("base.quad_tol", self.quad_tol)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(
                "base.lambda",
                format!("must be non-negative, got {}", self.lambda),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_a) {
            return Err(Error::param(
                "base.p_a",
                format!("must lie in [0, 1], got {}", self.p_a),
            ));
        }
        if self.n0 == 0 {
            return Err(Error::param("base.n0", "must be at least 1"));
        }
        if !(self.alpha > 2.0) || !self.alpha.is_finite() {
            return Err(Error::param("base.alpha", format!("must exceed 2, got {}", self.alpha)));
        }
        if self.l == 0 {
            return Err(Error::param("base.l", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::param("base.m", "must be at least 1"));
        }
        if let Some(n) = self.noise {
            pos("base.noise", n)?;
        }
        // the truncation disk must contain the seven-cell cluster
        if !(self.r_max_factor > 1.0 + 3f64.sqrt()) || !self.r_max_factor.is_finite() {
            return Err(Error::param(
                "base.r_max_factor",
                format!("must exceed 1 + √3 ≈ 2.732, got {}", self.r_max_factor),
            ));
        }
        Ok(())
    }
}

/// Activity prior family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorFamily {
    Iid,
    Pairs,
    Groups,
}

/// Activity prior of every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorFamily,
    /// Pair correlation (`pairs`).
    pub eta: f64,
    /// Devices per group (`groups`).
    pub group_size: usize,
    /// Group activity probability (`groups`); defaults to `p_a`.
    pub p_group: Option<f64>,
    /// Mixed-state weight of the all-or-nothing coefficients.
    pub epsilon: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            kind: PriorFamily::Iid,
            eta: 0.0,
            group_size: 2,
            p_group: None,
            epsilon: crate::priors::mvb::DEFAULT_EPSILON,
        }
    }
}

impl PriorSpec {
    /// Prior over `n` devices with marginal `p_a`.
    pub fn build(&self, n: usize, p_a: f64) -> Result<MvbPrior> {
        match self.kind {
            PriorFamily::Iid => MvbPrior::iid(n, p_a),
            PriorFamily::Pairs => MvbPrior::pairs(n, p_a, self.eta, self.epsilon),
            PriorFamily::Groups => {
                MvbPrior::uniform_groups(n, self.group_size, self.p_group.unwrap_or(p_a), self.epsilon)
            }
        }
    }
}

/// Quantity varied across grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "L")]
    L,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "group_size")]
    GroupSize,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::None => "none",
            SweepVar::Theta => "theta",
            SweepVar::L => "L",
            SweepVar::M => "M",
            SweepVar::Lambda => "lambda",
            SweepVar::Eta => "eta",
            SweepVar::GroupSize => "group_size",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            variable: SweepVar::None,
            values: vec![0.0],
        }
    }
}

/// A named detector: estimator, mode, and whether interference is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorKind {
    pub estimator: Estimator,
    pub mode: Mode,
    /// Keep interference powers at zero (single-cell baseline).
    pub freeze_x: bool,
}

impl DetectorKind {
    pub const ML_NONCOOP: DetectorKind = DetectorKind::new(Estimator::Ml, Mode::Noncoop, false);
    pub const MAP_NONCOOP: DetectorKind = DetectorKind::new(Estimator::Map, Mode::Noncoop, false);
    pub const ML_COOP: DetectorKind = DetectorKind::new(Estimator::Ml, Mode::Coop, false);
    pub const MAP_COOP: DetectorKind = DetectorKind::new(Estimator::Map, Mode::Coop, false);
    pub const ML_SINGLE: DetectorKind = DetectorKind::new(Estimator::Ml, Mode::Noncoop, true);

    pub const fn new(estimator: Estimator, mode: Mode, freeze_x: bool) -> Self {
        DetectorKind {
            estimator,
            mode,
            freeze_x,
        }
    }

    pub fn name(&self) -> String {
        let e = match self.estimator {
            Estimator::Ml => "ml",
            Estimator::Map => "map",
        };
        let m = match (self.mode, self.freeze_x) {
            (Mode::Noncoop, true) => "single",
            (Mode::Noncoop, false) => "noncoop",
            (Mode::Coop, true) => "coop-single",
            (Mode::Coop, false) => "coop",
        };
        format!("{e}-{m}")
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (e, rest) = s
            .split_once('-')
            .ok_or_else(|| Error::param("detectors", format!("unknown detector {s:?}")))?;
        let estimator = match e {
            "ml" => Estimator::Ml,
            "map" => Estimator::Map,
            _ => return Err(Error::param("detectors", format!("unknown estimator in {s:?}"))),
        };
        let (mode, freeze_x) = match rest {
            "noncoop" => (Mode::Noncoop, false),
            "single" => (Mode::Noncoop, true),
            "coop" => (Mode::Coop, false),
            "coop-single" => (Mode::Coop, true),
            _ => {
                return Err(Error::param(
                    "detectors",
                    format!("unknown detector {s:?}; expected <ml|map>-<noncoop|coop|single|coop-single>"),
                ))
            }
        };
        Ok(DetectorKind::new(estimator, mode, freeze_x))
    }
}

impl Serialize for DetectorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for DetectorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Current config schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Provenance recorded in run manifests; ignored when computing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInfo {
    pub tool_version: String,
    pub profile: String,
    pub config_path: String,
    pub overrides: Vec<String>,
}

/// Complete experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub base: BaseParams,
    pub prior: PriorSpec,
    pub sweep: Sweep,
    pub detectors: Vec<DetectorKind>,
    pub detector: DetectorConfig,
    pub realizations: usize,
    pub seed: u64,
    /// Largest tolerated fraction of aborted detector runs.
    pub max_abort_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            base: BaseParams::default(),
            prior: PriorSpec::default(),
            sweep: Sweep::default(),
            detectors: vec![
                DetectorKind::ML_NONCOOP,
                DetectorKind::MAP_NONCOOP,
                DetectorKind::ML_COOP,
                DetectorKind::MAP_COOP,
            ],
            detector: DetectorConfig::default(),
            realizations: 2000,
            seed: 1,
            max_abort_rate: 0.01,
            run: None,
        }
    }
}

impl ExperimentSpec {
    /// Base parameters and prior at one sweep value.
    pub fn point(&self, value: f64) -> Result<(BaseParams, PriorSpec)> {
        let mut base = self.base.clone();
        let mut prior = self.prior.clone();
        let as_count = |name: &'static str| -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value < 1e9 {
                Ok(value as usize)
            } else {
                Err(Error::param(
                    name,
                    format!("sweep value {value} is not a positive integer"),
                ))
            }
        };
        match self.sweep.variable {
            SweepVar::None | SweepVar::Theta => {}
            SweepVar::L => base.l = as_count("sweep.values")?,
            SweepVar::M => base.m = as_count("sweep.values")?,
            SweepVar::Lambda => base.lambda = value,
            SweepVar::Eta => {
                if prior.kind != PriorFamily::Pairs {
                    return Err(Error::param("sweep.variable", "eta sweeps need prior.kind = \"pairs\""));
                }
                prior.eta = value;
            }
            SweepVar::GroupSize => {
                if prior.kind != PriorFamily::Groups {
                    return Err(Error::param(
                        "sweep.variable",
                        "group_size sweeps need prior.kind = \"groups\"",
                    ));
                }
                prior.group_size = as_count("sweep.values")?;
            }
        }
        Ok((base, prior))
    }

    pub fn needs_coop(&self) -> bool {
        self.detectors.iter().any(|d| d.mode == Mode::Coop)
    }

    /// Full validation, including every grid point.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(
                "schema_version",
                format!(
                    "unsupported schema version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(Error::param("detectors", "at least one detector is required"));
        }
        if !(0.0..=1.0).contains(&self.max_abort_rate) {
            return Err(Error::param("max_abort_rate", "must lie in [0, 1]"));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::param("sweep.values", "grid must be nonempty"));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sweep.values", "grid values must be finite"));
        }
        if self.sweep.variable == SweepVar::Theta && self.sweep.values.iter().any(|&v| v < 0.0) {
            return Err(Error::param("sweep.values", "thresholds must be non-negative"));
        }
        let d = &self.detector;
        if d.max_iters == 0 {
            return Err(Error::param("detector.max_iters", "must be at least 1"));
        }
        if !(d.tol >= 0.0) {
            return Err(Error::param("detector.tol", "must be non-negative"));
        }
        if !(d.drift_limit > 0.0) {
            return Err(Error::param("detector.drift_limit", "must be positive"));
        }
        if !(0.0..=1.0).contains(&d.init_a) {
            return Err(Error::param("detector.init_a", "must lie in [0, 1]"));
        }
        let has_map = self.detectors.iter().any(|k| k.estimator == Estimator::Map);
        for &v in &self.sweep.values {
            let (base, prior) = self.point(v)?;
            base.validate()?;
            if prior.kind == PriorFamily::Pairs && base.n0 % 2 != 0 {
                return Err(Error::param("base.n0", "pairs prior needs an even device count"));
            }
            if base.p_a > 0.0 && base.p_a < 1.0 {
                prior.build(base.n0, base.p_a)?;
                if self.needs_coop() && base.n_neighbor > 0 {
                    prior.build(base.n_neighbor, base.p_a)?;
                }
            } else if has_map || prior.kind != PriorFamily::Iid {
                return Err(Error::param(
                    "base.p_a",
                    "p_a of 0 or 1 is only supported by ML detectors with the iid prior",
                ));
            }
        }
        if self.needs_coop() && self.base.n_neighbor == 0 {
            log::warn!("cooperative detectors with empty neighbor cells");
        }
        Ok(())
    }
}
