//! C ABI for the icad library.
//!
//! Every function returns an [`IcadStatus`]; on failure a message is kept per
//! thread and read back with [`icad_last_error`]. Objects are opaque handles
//! released with their matching `_free` function. Panics never cross the
//! boundary; they surface as [`IcadStatus::Panic`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use icad::config::{resolve_str, Profile};
use icad::detect::{run_detector, CellPrior, DetectionProblem, DetectorConfig, Estimator, Mode, XPenalty};
use icad::harness::{run_experiment_unchecked, ExperimentOutput, ExperimentSpec};
use icad::linalg::CMatrix;
use icad::priors::moments::DEFAULT_TOL;
use icad::priors::{interference_moments, MvbPrior};
use icad::signal::PilotSet;
use icad::Error;
use num_complex::Complex64;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcadStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// A parameter is out of range.
    InvalidParameter = 2,
    /// Inputs are inconsistent or malformed.
    InvalidInput = 3,
    /// The config could not be parsed or validated.
    Config = 4,
    /// A numerical step failed.
    Numerical = 5,
    /// More detector runs aborted than the experiment tolerates.
    AbortRate = 6,
    /// A caller buffer is too small; the required size was reported.
    BufferTooSmall = 7,
    /// File access failed.
    Io = 8,
    /// Internal error.
    Panic = 9,
}

/// Complex number laid out as two doubles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcadComplex {
    pub re: f64,
    pub im: f64,
}

/// One result row of an experiment.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcadRow {
    /// Index into the experiment's detector list.
    pub detector: usize,
    pub sweep_value: f64,
    pub theta_star: f64,
    pub p_err: f64,
    pub p_miss: f64,
    pub p_fa: f64,
    pub ci95: f64,
    pub realizations: usize,
}

/// Iteration controls for [`icad_problem_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcadDetectorConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Iterations between inverse refreshes; 0 disables them.
    pub refresh_every: usize,
    pub drift_limit: f64,
}

/// Run summary from [`icad_problem_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcadRunInfo {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub final_drift: f64,
}

/// Resolved experiment definition.
pub struct IcadExperiment {
    spec: ExperimentSpec,
}

/// Outcome of [`icad_experiment_run`].
pub struct IcadResults {
    out: ExperimentOutput,
    names: Vec<CString>,
}

/// Detection problem built from caller data.
pub struct IcadProblem {
    problem: DetectionProblem,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> IcadStatus {
    match e {
        Error::InvalidParameter { .. } | Error::DivergentMoment { .. } => IcadStatus::InvalidParameter,
        Error::InvalidInput(_) | Error::UnsupportedPrior(_) | Error::SingularDistance => IcadStatus::InvalidInput,
        Error::Config(_) => IcadStatus::Config,
        Error::AbortRate { .. } => IcadStatus::AbortRate,
        Error::Io(_) => IcadStatus::Io,
        Error::NotPositiveDefinite(_) | Error::InverseDrift { .. } | Error::Numerical(_) => IcadStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (IcadStatus, String)>) -> IcadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IcadStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            IcadStatus::Panic
        }
    }
}

fn lib(e: Error) -> (IcadStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (IcadStatus, String) {
    (IcadStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> (IcadStatus, String) {
    (IcadStatus::InvalidInput, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (IcadStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

/// Copies `s` plus a terminating NUL into `buf`; always reports the needed size.
unsafe fn write_str(s: &[u8], buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), (IcadStatus, String)> {
    if !needed.is_null() {
        *needed = s.len() + 1;
    }
    if buf.is_null() || len < s.len() + 1 {
        return Err((
            IcadStatus::BufferTooSmall,
            format!("buffer of {len} bytes is too small, {} needed", s.len() + 1),
        ));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
///
/// The pointer stays valid until the next icad call on the same thread.
#[no_mangle]
pub extern "C" fn icad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn icad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses and validates a TOML experiment config.
///
/// `profile` is `"desk"` or `"paper"` (null means paper). `overrides` holds
/// `n_overrides` strings of the form `key.path=value`, applied last.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icad_experiment_from_toml(
    toml_text: *const c_char,
    profile: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut IcadExperiment,
) -> IcadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(toml_text, "toml_text")?;
        let profile: Profile = if profile.is_null() {
            Profile::Paper
        } else {
            str_arg(profile, "profile")?.parse().map_err(lib)?
        };
        let mut ovr = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return Err(null("overrides"));
            }
            for k in 0..n_overrides {
                ovr.push(str_arg(*overrides.add(k), "overrides[k]")?.to_string());
            }
        }
        let spec = resolve_str(text, "<config>", profile, &ovr).map_err(lib)?;
        *out = Box::into_raw(Box::new(IcadExperiment { spec }));
        Ok(())
    })
}

/// Resolved config as TOML text; see [`icad_results_csv`] for the buffer protocol.
///
/// # Safety
/// `exp` must come from [`icad_experiment_from_toml`]; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn icad_experiment_toml(
    exp: *const IcadExperiment,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> IcadStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let text = icad::config::to_toml(&exp.spec).map_err(lib)?;
        write_str(text.as_bytes(), buf, len, needed)
    })
}

/// Releases an experiment; null is ignored.
///
/// # Safety
/// `exp` must come from [`icad_experiment_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn icad_experiment_free(exp: *mut IcadExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs the experiment on `workers` threads (0 = one per core).
///
/// Results are returned even when the abort rate exceeds the configured
/// limit; the status is then [`IcadStatus::AbortRate`] and `*out` is still set.
///
/// # Safety
/// `exp` must be a live experiment; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icad_experiment_run(
    exp: *const IcadExperiment,
    workers: usize,
    out: *mut *mut IcadResults,
) -> IcadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let res = run_experiment_unchecked(&exp.spec, workers).map_err(lib)?;
        let names = res
            .detectors
            .iter()
            .map(|d| CString::new(d.name()).unwrap_or_default())
            .collect();
        let check = res.check_abort_rate(exp.spec.max_abort_rate);
        *out = Box::into_raw(Box::new(IcadResults { out: res, names }));
        check.map_err(lib)
    })
}

/// Number of result rows.
///
/// # Safety
/// `res` must be a live results handle or null.
#[no_mangle]
pub unsafe extern "C" fn icad_results_num_rows(res: *const IcadResults) -> usize {
    res.as_ref().map_or(0, |r| r.out.rows.len())
}

/// Number of detectors.
///
/// # Safety
/// `res` must be a live results handle or null.
#[no_mangle]
pub unsafe extern "C" fn icad_results_num_detectors(res: *const IcadResults) -> usize {
    res.as_ref().map_or(0, |r| r.names.len())
}

/// Name of detector `index`, owned by `res`.
///
/// # Safety
/// `res` must be a live results handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icad_results_detector_name(
    res: *const IcadResults,
    index: usize,
    out: *mut *const c_char,
) -> IcadStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let name = r
            .names
            .get(index)
            .ok_or_else(|| invalid(format!("detector {index} out of range")))?;
        *out = name.as_ptr();
        Ok(())
    })
}

/// Row `index`.
///
/// # Safety
/// `res` must be a live results handle; `row` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icad_results_row(res: *const IcadResults, index: usize, row: *mut IcadRow) -> IcadStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        let row = row.as_mut().ok_or_else(|| null("row"))?;
        let src = r
            .out
            .rows
            .get(index)
            .ok_or_else(|| invalid(format!("row {index} out of range")))?;
        let detector = r
            .out
            .detectors
            .iter()
            .position(|d| d.name() == src.detector)
            .ok_or_else(|| invalid("row names an unknown detector"))?;
        *row = IcadRow {
            detector,
            sweep_value: src.sweep_value,
            theta_star: src.theta_star,
            p_err: src.p_err,
            p_miss: src.p_miss,
            p_fa: src.p_fa,
            ci95: src.ci95,
            realizations: src.realizations,
        };
        Ok(())
    })
}

/// Fraction of detector runs that aborted.
///
/// # Safety
/// `res` must be a live results handle or null.
#[no_mangle]
pub unsafe extern "C" fn icad_results_abort_rate(res: *const IcadResults) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.out.abort_rate())
}

/// Results as CSV text.
///
/// `*needed` receives the size including the terminating NUL. If `buf` is
/// null or `len` is smaller, nothing is written and the status is
/// [`IcadStatus::BufferTooSmall`].
///
/// # Safety
/// `res` must be a live results handle; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn icad_results_csv(
    res: *const IcadResults,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> IcadStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        let csv = r.out.to_csv().map_err(lib)?;
        write_str(csv.as_bytes(), buf, len, needed)
    })
}

/// Releases results; null is ignored.
///
/// # Safety
/// `res` must come from [`icad_experiment_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn icad_results_free(res: *mut IcadResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Builds an ML detection problem from caller data.
///
/// `pilots` is the `l × n` pilot matrix, column-major. `gains` holds
/// `num_aps × n` path losses, AP-major. `covs` holds `num_aps` sample
/// covariances of size `l × l`, each column-major. More than one AP selects
/// cooperative detection.
///
/// # Safety
/// Arrays must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn icad_problem_new(
    l: usize,
    n: usize,
    num_aps: usize,
    pilots: *const IcadComplex,
    gains: *const f64,
    covs: *const IcadComplex,
    noise: f64,
    m: usize,
    out: *mut *mut IcadProblem,
) -> IcadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if l == 0 || n == 0 || num_aps == 0 {
            return Err(invalid("l, n and num_aps must be positive"));
        }
        if pilots.is_null() {
            return Err(null("pilots"));
        }
        if gains.is_null() {
            return Err(null("gains"));
        }
        if covs.is_null() {
            return Err(null("covs"));
        }
        let c = |z: &IcadComplex| Complex64::new(z.re, z.im);
        let pil = std::slice::from_raw_parts(pilots, l * n);
        let p = CMatrix::from_iterator(l, n, pil.iter().map(c));
        let g = std::slice::from_raw_parts(gains, num_aps * n);
        let cv = std::slice::from_raw_parts(covs, num_aps * l * l);
        let problem = DetectionProblem {
            mode: if num_aps > 1 { Mode::Coop } else { Mode::Noncoop },
            estimator: Estimator::Ml,
            pilots: PilotSet { p },
            gains: g.chunks(n).map(<[f64]>::to_vec).collect(),
            covs: cv
                .chunks(l * l)
                .map(|blk| CMatrix::from_iterator(l, l, blk.iter().map(c)))
                .collect(),
            noise,
            m,
            priors: vec![],
            x_priors: vec![XPenalty::NONE; num_aps],
            freeze_x: false,
        };
        problem.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(IcadProblem { problem }));
        Ok(())
    })
}

/// Switches to MAP estimation with independent activities of probability `p_a`.
///
/// # Safety
/// `problem` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn icad_problem_set_iid_prior(problem: *mut IcadProblem, p_a: f64) -> IcadStatus {
    guard(|| {
        let pr = &mut problem.as_mut().ok_or_else(|| null("problem"))?.problem;
        let prior = MvbPrior::iid(pr.num_devices(), p_a).map_err(lib)?;
        pr.priors = vec![CellPrior { offset: 0, prior }];
        pr.estimator = Estimator::Map;
        Ok(())
    })
}

/// Switches to MAP estimation with a Gaussian prior of `mean` and `var` on AP
/// `ap`'s interference powers; `var = INFINITY` removes the penalty.
///
/// # Safety
/// `problem` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn icad_problem_set_interference_prior(
    problem: *mut IcadProblem,
    ap: usize,
    mean: f64,
    var: f64,
) -> IcadStatus {
    guard(|| {
        let pr = &mut problem.as_mut().ok_or_else(|| null("problem"))?.problem;
        if ap >= pr.num_aps() {
            return Err(invalid(format!("AP {ap} out of range")));
        }
        if !(mean >= 0.0 && mean.is_finite()) || !(var >= 0.0) {
            return Err((
                IcadStatus::InvalidParameter,
                format!("need finite mean >= 0 and var >= 0, got {mean} and {var}"),
            ));
        }
        let k = if var == f64::INFINITY {
            0.0
        } else if var == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (var * pr.m as f64)
        };
        pr.x_priors[ap] = XPenalty { mean, k };
        pr.estimator = Estimator::Map;
        Ok(())
    })
}

/// Default iteration controls.
#[no_mangle]
pub extern "C" fn icad_detector_config_default() -> IcadDetectorConfig {
    let d = DetectorConfig::default();
    IcadDetectorConfig {
        max_iters: d.max_iters,
        tol: d.tol,
        refresh_every: d.refresh_every,
        drift_limit: d.drift_limit,
    }
}

/// Runs coordinate descent from the all-zero start.
///
/// Writes `n` soft activities to `a_out` and `num_aps × l` interference
/// powers to `x_out` (AP-major). `cfg` and `info` may be null.
///
/// # Safety
/// `problem` must be a live problem handle; output arrays must hold the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn icad_problem_run(
    problem: *const IcadProblem,
    cfg: *const IcadDetectorConfig,
    a_out: *mut f64,
    x_out: *mut f64,
    info: *mut IcadRunInfo,
) -> IcadStatus {
    guard(|| {
        let pr = &problem.as_ref().ok_or_else(|| null("problem"))?.problem;
        if a_out.is_null() {
            return Err(null("a_out"));
        }
        if x_out.is_null() {
            return Err(null("x_out"));
        }
        let mut dc = DetectorConfig::default();
        if let Some(c) = cfg.as_ref() {
            dc.max_iters = c.max_iters;
            dc.tol = c.tol;
            dc.refresh_every = c.refresh_every;
            dc.drift_limit = c.drift_limit;
        }
        if dc.max_iters == 0 || !(dc.tol >= 0.0) || !(dc.drift_limit > 0.0) {
            return Err((
                IcadStatus::InvalidParameter,
                "need max_iters >= 1, tol >= 0 and drift_limit > 0".into(),
            ));
        }
        let r = run_detector(pr, &dc).map_err(lib)?;
        ptr::copy_nonoverlapping(r.a.as_ptr(), a_out, r.a.len());
        let l = pr.len();
        for (j, xj) in r.x.iter().enumerate() {
            ptr::copy_nonoverlapping(xj.as_ptr(), x_out.add(j * l), l);
        }
        if let Some(info) = info.as_mut() {
            *info = IcadRunInfo {
                iterations: r.iterations,
                converged: r.converged,
                objective: *r.trajectory.last().unwrap_or(&f64::NAN),
                final_drift: r.final_drift,
            };
        }
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `problem` must come from [`icad_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn icad_problem_free(problem: *mut IcadProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Gaussian moments of the interference power: one AP without cooperation,
/// seven with. Writes that many values to `mean_out` and `var_out`.
///
/// # Safety
/// Output arrays must hold 1 (or 7 with `coop`) doubles.
#[no_mangle]
pub unsafe extern "C" fn icad_interference_moments(
    lambda: f64,
    r: f64,
    alpha: f64,
    coop: bool,
    mean_out: *mut f64,
    var_out: *mut f64,
) -> IcadStatus {
    guard(|| {
        if mean_out.is_null() {
            return Err(null("mean_out"));
        }
        if var_out.is_null() {
            return Err(null("var_out"));
        }
        let m = interference_moments(lambda, r, alpha, DEFAULT_TOL, coop).map_err(lib)?;
        for (k, ap) in m.per_ap.iter().enumerate() {
            *mean_out.add(k) = ap.mean;
            *var_out.add(k) = ap.var;
        }
        Ok(())
    })
}
