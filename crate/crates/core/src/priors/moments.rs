//! Mean and variance of the per-dimension interference power.
//!
//! Interferers form a homogeneous PPP of density `λ` outside an exclusion
//! region, and the interference power at an AP is the shot noise
//! `Σ d_i^(−α)`. By Campbell's theorem its mean and variance are `λ∫ d^(−α)`
//! and `λ∫ d^(−2α)` over the region. The exterior of a hexagon splits into 12
//! congruent wedges `{x ≥ (√3/2)R, 0 ≤ y ≤ x/√3}`; the seven-cell exclusion
//! subtracts the part of each wedge covered by the neighbor cells.
//!
//! Integrals are computed in coordinates scaled by `R`, nested
//! double-exponential quadrature inside, with the infinite outer limit mapped
//! to `(0, 1]` by `u = (√3/2)/t`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use quadrature::double_exponential::integrate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const APOTHEM: f64 = 0.5 * SQRT3;

/// Default relative tolerance of the moment quadrature.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Gaussian moments of the interference power at one AP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApMoments {
    pub mean: f64,
    pub var: f64,
    pub mean_err: f64,
    pub var_err: f64,
}

impl ApMoments {
    pub const ZERO: ApMoments = ApMoments {
        mean: 0.0,
        var: 0.0,
        mean_err: 0.0,
        var_err: 0.0,
    };
}

/// Moments per AP: one entry without cooperation, seven with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceMoments {
    pub per_ap: Vec<ApMoments>,
}

/// Integral value and error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Est {
    v: f64,
    e: f64,
}

impl Est {
    fn plus(self, o: Est, w: f64) -> Est {
        Est {
            v: self.v + w * o.v,
            e: self.e + w.abs() * o.e,
        }
    }
}

fn integrate_2d(beta: f64, x0: f64, x1: f64, lo: impl Fn(f64) -> f64, hi: impl Fn(f64) -> f64, abs_tol: f64) -> Est {
    let inner_err = std::cell::Cell::new(0.0f64);
    let width = x1 - x0;
    let outer = integrate(
        |u| {
            let (a, b) = (lo(u), hi(u));
            if b <= a {
                return 0.0;
            }
            let r = integrate(|v| (u * u + v * v).powf(-beta), a, b, abs_tol / width);
            inner_err.set(inner_err.get().max(r.error_estimate));
            r.integral
        },
        x0,
        x1,
        abs_tol,
    );
    Est {
        v: outer.integral,
        e: outer.error_estimate + width * inner_err.get(),
    }
}

/// `∫_{√3/2}^∞ ∫_0^{u/√3} (u²+v²)^(−β) dv du`.
fn wedge(beta: f64, abs_tol: f64) -> Est {
    let inner_err = std::cell::Cell::new(0.0f64);
    let outer = integrate(
        |t| {
            if t <= 0.0 {
                return 0.0;
            }
            let u = APOTHEM / t;
            let jac = APOTHEM / (t * t);
            let r = integrate(|v| (u * u + v * v).powf(-beta), 0.0, u / SQRT3, abs_tol);
            inner_err.set(inner_err.get().max(r.error_estimate * jac));
            r.integral * jac
        },
        0.0,
        1.0,
        abs_tol,
    );
    Est {
        v: outer.integral,
        e: outer.error_estimate + inner_err.get(),
    }
}

/// Upper boundary of the seven-cell union inside the wedge.
pub fn u0(x: f64) -> f64 {
    if x < SQRT3 {
        x / SQRT3
    } else if x <= 1.5 * SQRT3 {
        -x / SQRT3 + 2.0
    } else {
        0.0
    }
}

/// Upper boundary of the second correction region.
pub fn u1(x: f64) -> f64 {
    if x < 1.5 * SQRT3 {
        x / SQRT3 + 1.0
    } else if x <= 2.0 * SQRT3 {
        -x / SQRT3 + 4.0
    } else {
        -x / SQRT3 + 3.0
    }
}

/// `∫_{√3/2}^{3√3/2} ∫_0^{U0(u)} (u²+v²)^(−β)`, in units of `R`.
fn k0(beta: f64, tol: f64) -> Est {
    let zero = |_: f64| 0.0;
    integrate_2d(beta, APOTHEM, SQRT3, zero, u0, tol).plus(integrate_2d(beta, SQRT3, 1.5 * SQRT3, zero, u0, tol), 1.0)
}

/// `∫_{√3}^{5√3/2} ∫_{U0(u)}^{U1(u)} (u²+v²)^(−β)`, in units of `R`.
fn k1(beta: f64, tol: f64) -> Est {
    let a = integrate_2d(beta, SQRT3, 1.5 * SQRT3, u0, u1, tol);
    let b = integrate_2d(beta, 1.5 * SQRT3, 2.0 * SQRT3, u0, u1, tol);
    let c = integrate_2d(beta, 2.0 * SQRT3, 2.5 * SQRT3, u0, u1, tol);
    a.plus(b, 1.0).plus(c, 1.0)
}

fn validate(lambda: f64, r: f64, alpha: f64, tol: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(
            "lambda",
            format!("density must be non-negative, got {lambda}"),
        ));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param("R", format!("cell side must be positive, got {r}")));
    }
    if !(alpha > 2.0) || !alpha.is_finite() {
        return Err(Error::DivergentMoment { alpha });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::param("quadrature_tol", format!("must lie in (0, 1), got {tol}")));
    }
    Ok(())
}

/// Runs `f` with an absolute tolerance of `tol` times the magnitude of a coarse first pass.
fn relative(tol: f64, f: impl Fn(f64) -> Est) -> Est {
    let coarse = f(1e-4);
    f(tol * coarse.v.abs().max(1e-300))
}

/// Moments at AP 0 when only cell 0 is excluded.
pub fn interference_moments_noncoop(lambda: f64, r: f64, alpha: f64, tol: f64) -> Result<ApMoments> {
    validate(lambda, r, alpha, tol)?;
    if lambda == 0.0 {
        return Ok(ApMoments::ZERO);
    }
    let wm = relative(tol, |t| wedge(alpha / 2.0, t));
    let wv = relative(tol, |t| wedge(alpha, t));
    let sm = 12.0 * lambda * r.powf(2.0 - alpha);
    let sv = 12.0 * lambda * r.powf(2.0 - 2.0 * alpha);
    Ok(ApMoments {
        mean: sm * wm.v,
        var: sv * wv.v,
        mean_err: sm * wm.e,
        var_err: sv * wv.e,
    })
}

/// Moments at APs 0..=6 when all seven cells are excluded.
pub fn interference_moments_coop(lambda: f64, r: f64, alpha: f64, tol: f64) -> Result<Vec<ApMoments>> {
    validate(lambda, r, alpha, tol)?;
    if lambda == 0.0 {
        return Ok(vec![ApMoments::ZERO; 7]);
    }
    let one = |beta: f64, scale: f64| {
        let w = relative(tol, |t| wedge(beta, t));
        let a = relative(tol, |t| k0(beta, t));
        let b = relative(tol, |t| k1(beta, t));
        let first = Est { v: 0.0, e: 0.0 }.plus(w, 12.0).plus(a, -12.0);
        let other = Est { v: 0.0, e: 0.0 }.plus(first, 0.5).plus(w, 6.0).plus(b, -2.0);
        (
            Est {
                v: scale * first.v,
                e: scale * first.e,
            },
            Est {
                v: scale * other.v,
                e: scale * other.e,
            },
        )
    };
    let (m0, mj) = one(alpha / 2.0, lambda * r.powf(2.0 - alpha));
    let (v0, vj) = one(alpha, lambda * r.powf(2.0 - 2.0 * alpha));
    let mut out = vec![ApMoments {
        mean: m0.v,
        var: v0.v,
        mean_err: m0.e,
        var_err: v0.e,
    }];
    out.extend(std::iter::repeat_n(
        ApMoments {
            mean: mj.v,
            var: vj.v,
            mean_err: mj.e,
            var_err: vj.e,
        },
        6,
    ));
    Ok(out)
}

/// Moments when the exclusion region is a disk of radius `r`, by the same quadrature.
pub fn interference_moments_disk(lambda: f64, r: f64, alpha: f64, tol: f64) -> Result<ApMoments> {
    validate(lambda, r, alpha, tol)?;
    // ∫_1^∞ 2π ρ^(1−2β) dρ with ρ = 1/t
    let radial = |beta: f64, abs_tol: f64| {
        let o = integrate(
            |t| {
                if t <= 0.0 {
                    0.0
                } else {
                    std::f64::consts::TAU * t.powf(2.0 * beta - 3.0)
                }
            },
            0.0,
            1.0,
            abs_tol,
        );
        Est {
            v: o.integral,
            e: o.error_estimate,
        }
    };
    let m = relative(tol, |t| radial(alpha / 2.0, t));
    let v = relative(tol, |t| radial(alpha, t));
    let sm = lambda * r.powf(2.0 - alpha);
    let sv = lambda * r.powf(2.0 - 2.0 * alpha);
    Ok(ApMoments {
        mean: sm * m.v,
        var: sv * v.v,
        mean_err: sm * m.e,
        var_err: sv * v.e,
    })
}

type Key = (u64, u64, u64, u64, bool);

fn cache() -> &'static RwLock<HashMap<Key, Vec<ApMoments>>> {
    static CACHE: OnceLock<RwLock<HashMap<Key, Vec<ApMoments>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached moments: one entry without cooperation, seven with.
pub fn interference_moments(lambda: f64, r: f64, alpha: f64, tol: f64, coop: bool) -> Result<InterferenceMoments> {
    let key = (lambda.to_bits(), r.to_bits(), alpha.to_bits(), tol.to_bits(), coop);
    if let Some(v) = cache().read().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Ok(InterferenceMoments { per_ap: v.clone() });
    }
    let v = if coop {
        interference_moments_coop(lambda, r, alpha, tol)?
    } else {
        vec![interference_moments_noncoop(lambda, r, alpha, tol)?]
    };
    cache()
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(key, v.clone());
    Ok(InterferenceMoments { per_ap: v })
}
