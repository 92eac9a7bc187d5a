//! Exact one-dimensional coordinate minimizers.
//!
//! Every step works on scalar summaries of the cached inverse covariance.
//! For an activity coordinate with pilot `p` and gain `γ`,
//! `q = pᴴΣ⁻¹p` and `s = pᴴΣ⁻¹Σ̂Σ⁻¹p`; moving `a` by `d` changes the
//! likelihood term by `ln(1+dγq) − dγs/(1+dγq)`. For an interference
//! coordinate `ℓ`, `q = (Σ⁻¹)_ℓℓ` and `s = wᴴΣ̂w` with `w` the `ℓ`-th column
//! of `Σ⁻¹`, and the same expression holds with `γ = 1`.

use crate::error::{Error, Result};
use crate::rootfind::{cubic_real_roots, poly_real_roots, RealPolynomial};

/// Change of `ln(1+dγq) − dγs/(1+dγq)`, the likelihood part of a step.
pub fn likelihood_delta(d: f64, gq: f64, gs: f64) -> f64 {
    let t = d * gq;
    t.ln_1p() - d * gs / (1.0 + t)
}

/// Unconstrained stationary point of the likelihood part, `(s − q)/(γq²)`.
pub fn ml_stationary(q: f64, s: f64, gamma: f64) -> f64 {
    (s - q) / (gamma * q * q)
}

/// Activity step without prior, clipped to `[−a, 1−a]`.
pub fn ml_a_step(q: f64, s: f64, gamma: f64, a: f64) -> f64 {
    ml_stationary(q, s, gamma).clamp(-a, 1.0 - a)
}

/// Interference step without prior, `max((s−q)/q², −x)`.
pub fn ml_x_step(q: f64, s: f64, x: f64) -> f64 {
    ((s - q) / (q * q)).max(-x)
}

/// One-dimensional activity objective `ln(1+dγq) − dγs/(1+dγq) − C·d`.
pub fn a_objective(d: f64, q: f64, s: f64, gamma: f64, c: f64) -> f64 {
    likelihood_delta(d, gamma * q, gamma * s) - c * d
}

/// Local minimizer of the activity objective for `C < γq²/(4s)`:
/// the smaller root of `Ct² − γqt + γs = 0` in `t = 1 + dγq`.
pub fn map_a_local_min(q: f64, s: f64, gamma: f64, c: f64) -> f64 {
    let gq2 = gamma * q * q;
    let z = 4.0 * c * s / gq2;
    2.0 * s / (gq2 * (1.0 + (1.0 - z).sqrt())) - 1.0 / (gamma * q)
}

/// Activity step with prior slope `c`.
pub fn map_a_step_noncoop(q: f64, s: f64, gamma: f64, a: f64, c: f64) -> Result<f64> {
    if c == 0.0 {
        return Ok(ml_a_step(q, s, gamma, a));
    }
    let (lo, hi) = (-a, 1.0 - a);
    if c < 0.0 {
        return Ok(map_a_local_min(q, s, gamma, c).clamp(lo, hi));
    }
    let threshold = gamma * q * q / (4.0 * s);
    if c >= threshold {
        return Ok(hi);
    }
    let z = 4.0 * c * s / (gamma * q * q);
    if !(z < 1.0) {
        return Err(Error::Numerical(format!(
            "activity step branch misclassified: C = {c:e}, threshold = {threshold:e}"
        )));
    }
    let local = map_a_local_min(q, s, gamma, c).clamp(lo, hi);
    let f_local = a_objective(local, q, s, gamma, c);
    let f_hi = a_objective(hi, q, s, gamma, c);
    Ok(if f_local <= f_hi { local } else { hi })
}

/// Interference prior for one AP: mean and inverse variance divided by `M`.
///
/// `k = 0` removes the prior; `k = ∞` pins the coordinate at the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XPenalty {
    pub mean: f64,
    pub k: f64,
}

impl XPenalty {
    pub const NONE: XPenalty = XPenalty { mean: 0.0, k: 0.0 };

    /// Penalty `(k/2)(x − μ)²`.
    pub fn value(&self, x: f64) -> f64 {
        if self.k == 0.0 {
            0.0
        } else if self.k.is_infinite() {
            if x == self.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            0.5 * self.k * (x - self.mean) * (x - self.mean)
        }
    }
}

/// One-dimensional interference objective relative to `d = 0`.
pub fn x_objective(d: f64, q: f64, s: f64, x: f64, pen: XPenalty) -> f64 {
    let lik = likelihood_delta(d, q, s);
    if pen.k == 0.0 {
        lik
    } else if pen.k.is_infinite() {
        lik + pen.value(x + d) - pen.value(x)
    } else {
        let c = x - pen.mean;
        lik + 0.5 * pen.k * d * (2.0 * c + d)
    }
}

/// Interference step with Gaussian prior.
///
/// Stationary points solve, in `u = q·d`,
/// `u³ + (2+qc)u² + (1+2qc+q²/k)u + (qc + q²/k − qs/k) = 0` with `c = x − μ`.
pub fn map_x_step(q: f64, s: f64, x: f64, pen: XPenalty, d_max: f64) -> Result<f64> {
    if pen.k == 0.0 {
        return Ok(ml_x_step(q, s, x));
    }
    if pen.k.is_infinite() {
        return Ok(pen.mean.max(0.0) - x);
    }
    let c = x - pen.mean;
    let qc = q * c;
    let r = q * q / pen.k;
    let coeffs = (qc + r - q * s / pen.k, 1.0 + 2.0 * qc + r, 2.0 + qc, 1.0);
    let lo = -x;
    let mut best = (lo, x_objective(lo, q, s, x, pen));
    for u in cubic_real_roots(coeffs.0, coeffs.1, coeffs.2, coeffs.3)? {
        let mut d = u / q;
        // polish on the rational derivative
        for _ in 0..2 {
            let t = 1.0 + q * d;
            let h = q / t - s / (t * t) + pen.k * (c + d);
            let dh = -q * q / (t * t) + 2.0 * q * s / (t * t * t) + pen.k;
            if dh != 0.0 && (h / dh).is_finite() {
                d -= h / dh;
            }
        }
        if !(d > lo && d <= d_max) || 1.0 + q * d <= 0.0 {
            continue;
        }
        let f = x_objective(d, q, s, x, pen);
        if f < best.1 || (f == best.1 && d < best.0) {
            best = (d, f);
        }
    }
    Ok(best.0)
}

/// Per-AP summaries of one activity coordinate: `B_j = γ_j q_j`, `S_j = γ_j s_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApTerm {
    pub b: f64,
    pub s: f64,
}

/// Multi-AP activity objective `Σ_j [ln(1+dB_j) − dS_j/(1+dB_j)] − C·d`.
pub fn coop_a_objective(d: f64, terms: &[ApTerm], c: f64) -> f64 {
    terms.iter().map(|t| likelihood_delta(d, t.b, t.s)).sum::<f64>() - c * d
}

/// Derivative of [`coop_a_objective`].
fn coop_h(d: f64, terms: &[ApTerm], c: f64) -> f64 {
    let mut h = -c;
    for t in terms {
        let den = 1.0 + d * t.b;
        h += t.b / den - t.s / (den * den);
    }
    h
}

/// `Σ_j [B_j(1+dB_j) − S_j] Π_{k≠j}(1+dB_k)² − C Π_k (1+dB_k)²`, ascending coefficients.
pub fn coop_cleared_polynomial(terms: &[ApTerm], c: f64) -> Vec<f64> {
    let u = terms.len();
    let mul = |p: &[f64], q: &[f64]| {
        let mut out = vec![0.0; p.len() + q.len() - 1];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    let sq: Vec<Vec<f64>> = terms.iter().map(|t| vec![1.0, 2.0 * t.b, t.b * t.b]).collect();
    let mut total = vec![0.0; 2 * u + 1];
    for (j, t) in terms.iter().enumerate() {
        let mut prod = vec![t.b - t.s, t.b * t.b];
        for (k, f) in sq.iter().enumerate() {
            if k != j {
                prod = mul(&prod, f);
            }
        }
        for (k, v) in prod.iter().enumerate() {
            total[k] += v;
        }
    }
    if c != 0.0 {
        let mut prod = vec![1.0];
        for f in &sq {
            prod = mul(&prod, f);
        }
        for (k, v) in prod.iter().enumerate() {
            total[k] -= c * v;
        }
    }
    total
}

/// Sign changes of the rational derivative on `[lo, hi]`, each solved to full precision.
///
/// Roots of the cleared polynomial seed the search. Near the poles the
/// polynomial's values drop below its rounding noise and its roots there are
/// only approximate, so each seed is bracketed on the rational derivative,
/// backed by a coarse uniform scan, and every bracket is bisected.
pub fn coop_stationary_points(terms: &[ApTerm], c: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let poly = RealPolynomial::new(coop_cleared_polynomial(terms, c))?;
    let seeds = if poly.is_zero() {
        vec![]
    } else {
        poly_real_roots(&poly, lo, hi)?
    };
    let width = hi - lo;
    let mut pts: Vec<f64> = (0..=SCAN_POINTS)
        .map(|k| lo + width * k as f64 / SCAN_POINTS as f64)
        .collect();
    for &r in &seeds {
        pts.push(r);
        for w in [1e-9, 1e-6, 1e-3] {
            pts.push((r - w * width).max(lo));
            pts.push((r + w * width).min(hi));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let h = |d: f64| coop_h(d, terms, c);
    let mut roots = Vec::new();
    let mut prev = (pts[0], h(pts[0]));
    if prev.1 == 0.0 {
        roots.push(prev.0);
    }
    for &x in &pts[1..] {
        let hx = h(x);
        if hx == 0.0 {
            roots.push(x);
        } else if prev.1 != 0.0 && (prev.1 > 0.0) != (hx > 0.0) {
            roots.push(bisect(&h, prev.0, x, prev.1 > 0.0));
        }
        prev = (x, hx);
    }
    Ok(roots)
}

/// Uniform scan resolution backing the polynomial seeds.
const SCAN_POINTS: usize = 16;

/// Root of `f` in `[a, b]` given a sign change, to the last representable bit.
fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, positive_at_a: bool) -> f64 {
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == positive_at_a {
            a = m;
        } else {
            b = m;
        }
    }
}

/// Activity step pooling several APs, minimizing over stationary points and box ends.
pub fn coop_a_step(terms: &[ApTerm], a: f64, c: f64) -> Result<f64> {
    let (lo, hi) = (-a, 1.0 - a);
    for t in terms {
        if !(1.0 + lo * t.b > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "pole inside the feasible interval: 1 + ({lo})·{} <= 0",
                t.b
            )));
        }
    }
    let mut cands = coop_stationary_points(terms, c, lo, hi)?;
    cands.push(lo);
    cands.push(hi);
    let mut best = (f64::NAN, f64::INFINITY);
    for d in cands {
        let f = coop_a_objective(d, terms, c);
        if f < best.1 || (f == best.1 && d < best.0) {
            best = (d, f);
        }
    }
    Ok(best.0)
}
