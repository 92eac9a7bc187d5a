//! Real roots of low-degree real polynomials.
//!
//! Roots on an interval are isolated recursively: the real roots of `p'`
//! split the interval into pieces on which `p` is monotone, so each piece
//! holds at most one root, found by safeguarded Newton iteration. A critical
//! point where `|p|` is below the evaluation error bound is reported as a
//! multiple root.

use crate::error::{Error, Result};

/// Highest degree the detectors produce.
pub const MAX_DEGREE: usize = 14;

const EPS: f64 = f64::EPSILON;

/// Real polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl RealPolynomial {
    /// Builds a polynomial from ascending coefficients, trimming negligible leading terms.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("polynomial has non-finite coefficients".into()));
        }
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() <= 1e-300) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() > MAX_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "polynomial degree {} exceeds {MAX_DEGREE}",
                coeffs.len() - 1
            )));
        }
        Ok(RealPolynomial { coeffs })
    }

    /// `scale · Π (x − r_k)`.
    pub fn from_roots(roots: &[f64], scale: f64) -> Result<Self> {
        let mut c = vec![scale];
        for &r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (k, &ck) in c.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= r * ck;
            }
            c = next;
        }
        Self::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc.mul_add(x, c))
    }

    /// Compensated Horner evaluation, accurate as if computed in twice the working precision.
    pub fn eval_compensated(&self, x: f64) -> f64 {
        let mut s = *self.coeffs.last().unwrap();
        let mut err = 0.0f64;
        for &c in self.coeffs.iter().rev().skip(1) {
            let (p, pe) = two_prod(s, x);
            let (t, se) = two_sum(p, c);
            s = t;
            err = err.mul_add(x, pe + se);
        }
        s + err
    }

    /// Bound on the rounding noise of evaluating `p(x)` from perturbed coefficients.
    pub fn noise_bound(&self, x: f64) -> f64 {
        let ax = x.abs();
        let mag = self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * ax + c.abs());
        8.0 * (self.degree().max(1) as f64) * EPS * mag
    }

    pub fn derivative(&self) -> RealPolynomial {
        if self.coeffs.len() <= 1 {
            return RealPolynomial { coeffs: vec![0.0] };
        }
        RealPolynomial {
            coeffs: self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, &c)| c * (k + 1) as f64)
                .collect(),
        }
    }

    /// Divides all coefficients by the largest magnitude.
    pub fn normalized(&self) -> RealPolynomial {
        let m = self.coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if m == 0.0 {
            return self.clone();
        }
        RealPolynomial {
            coeffs: self.coeffs.iter().map(|c| c / m).collect(),
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Real roots of `c0 + c1 x + c2 x² + c3 x³`, ascending, each Newton-polished.
pub fn cubic_real_roots(c0: f64, c1: f64, c2: f64, c3: f64) -> Result<Vec<f64>> {
    if [c0, c1, c2, c3].iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cubic has non-finite coefficients".into()));
    }
    if c1 == 0.0 && c2 == 0.0 && c3 == 0.0 {
        return Err(Error::InvalidInput("cubic has no non-constant term".into()));
    }
    let scale = [c0, c1, c2, c3].iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let (c0, c1, c2, c3) = (c0 / scale, c1 / scale, c2 / scale, c3 / scale);
    let mut roots = if c3.abs() <= 1e-14 * c2.abs().max(c1.abs()) {
        quadratic_roots(c0, c1, c2)
    } else {
        let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
        // depressed cubic t³ + p t + q with x = t − a/3
        let shift = a / 3.0;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let sq = disc.sqrt();
            let u = (-q / 2.0 + if q <= 0.0 { sq } else { -sq }).cbrt();
            let t = if u == 0.0 { 0.0 } else { u - p / (3.0 * u) };
            vec![t - shift]
        } else if p == 0.0 {
            vec![-shift]
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let th = arg.acos() / 3.0;
            (0..3)
                .map(|k| m * (th - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
                .collect()
        }
    };
    let poly = RealPolynomial::new(vec![c0, c1, c2, c3])?;
    let dp = poly.derivative();
    for r in roots.iter_mut() {
        for _ in 0..2 {
            let d = dp.eval(*r);
            if d != 0.0 {
                let step = poly.eval_compensated(*r) / d;
                if step.is_finite() {
                    *r -= step;
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dedupe(&mut roots);
    Ok(roots)
}

fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    if c2 == 0.0 {
        return if c1 == 0.0 { vec![] } else { vec![-c0 / c1] };
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        if disc > -8.0 * EPS * (c1 * c1).max((4.0 * c2 * c0).abs()) {
            return vec![-c1 / (2.0 * c2)];
        }
        return vec![];
    }
    let sgn = if c1 >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (c1 + sgn * disc.sqrt());
    let r1 = q / c2;
    let r2 = if q != 0.0 { c0 / q } else { r1 };
    vec![r1, r2]
}

fn dedupe(roots: &mut Vec<f64>) {
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
}

/// All real roots of `poly` in `[lo, hi]`, ascending, multiple roots reported once.
pub fn poly_real_roots(poly: &RealPolynomial, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "root interval [{lo}, {hi}] must be finite"
        )));
    }
    if lo > hi {
        return Err(Error::InvalidInput(format!("empty root interval [{lo}, {hi}]")));
    }
    let p = poly.normalized();
    if p.degree() == 0 {
        return Ok(vec![]);
    }
    let mut roots = isolate(&p, lo, hi);
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0));
    Ok(roots)
}

fn isolate(p: &RealPolynomial, lo: f64, hi: f64) -> Vec<f64> {
    match p.degree() {
        0 => vec![],
        1 => {
            let r = -p.coeffs[0] / p.coeffs[1];
            if (lo..=hi).contains(&r) {
                vec![r]
            } else {
                vec![]
            }
        }
        _ => {
            let crit = isolate(&p.derivative().normalized(), lo, hi);
            let mut knots = Vec::with_capacity(crit.len() + 2);
            knots.push(lo);
            knots.extend(crit.iter().copied().filter(|&c| c > lo && c < hi));
            knots.push(hi);
            let vals: Vec<f64> = knots.iter().map(|&x| p.eval_compensated(x)).collect();
            let mut roots = Vec::new();
            for (k, (&x, &v)) in knots.iter().zip(&vals).enumerate() {
                if v.abs() <= p.noise_bound(x) {
                    roots.push(x);
                    continue;
                }
                if k + 1 < knots.len() {
                    let (x1, v1) = (knots[k + 1], vals[k + 1]);
                    if v.signum() != v1.signum() && v1.abs() > p.noise_bound(x1) {
                        roots.push(bracketed(p, x, x1, v));
                    }
                }
            }
            roots
        }
    }
}

/// Root of a monotone piece with a sign change, by Newton safeguarded with bisection.
fn bracketed(p: &RealPolynomial, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let dp = p.derivative();
    let sa = fa.signum();
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = p.eval_compensated(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() == sa {
            a = x;
        } else {
            b = x;
        }
        if (b - a).abs() <= 2.0 * EPS * x.abs().max(1e-300) {
            break;
        }
        let d = dp.eval(x);
        let nx = if d != 0.0 { x - fx / d } else { f64::NAN };
        x = if nx.is_finite() && nx > a.min(b) && nx < a.max(b) {
            nx
        } else {
            0.5 * (a + b)
        };
        if (x == a || x == b) && (b - a).abs() <= 4.0 * EPS * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_roots(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len(), "got {got:?} want {want:?}");
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < tol, "got {got:?} want {want:?}");
        }
    }

    #[test]
    fn cubic_examples() {
        assert_roots(&cubic_real_roots(-1.0, 0.0, 0.0, 1.0).unwrap(), &[1.0], 1e-14);
        assert_roots(
            &cubic_real_roots(-6.0, 11.0, -6.0, 1.0).unwrap(),
            &[1.0, 2.0, 3.0],
            1e-13,
        );
        assert_roots(&cubic_real_roots(0.0, 1.0, 0.0, 1.0).unwrap(), &[0.0], 1e-14);
        assert!(cubic_real_roots(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(cubic_real_roots(f64::NAN, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn cubic_degenerates() {
        assert_roots(&cubic_real_roots(2.0, -3.0, 1.0, 0.0).unwrap(), &[1.0, 2.0], 1e-14);
        assert_roots(&cubic_real_roots(4.0, 2.0, 0.0, 0.0).unwrap(), &[-2.0], 1e-14);
        assert!(cubic_real_roots(1.0, 0.0, 1.0, 0.0).unwrap().is_empty());
        // triple root
        let r = cubic_real_roots(-1.0, 3.0, -3.0, 1.0).unwrap();
        assert!(r.iter().all(|x| (x - 1.0).abs() < 1e-5));
    }

    #[test]
    fn cubic_residuals() {
        let cases = [(0.3, -2.0, 0.7, 5.0), (1e-3, 1.0, 2.0, 1e-2), (-5.0, 0.1, 3.0, -0.4)];
        for (c0, c1, c2, c3) in cases {
            let roots = cubic_real_roots(c0, c1, c2, c3).unwrap();
            assert!(!roots.is_empty());
            let m = [c0, c1, c2, c3].iter().fold(0.0f64, |a: f64, c: &f64| a.max(c.abs()));
            for r in roots {
                let v = c0 + r * (c1 + r * (c2 + r * c3));
                assert!(v.abs() <= 1e-9 * m * r.abs().max(1.0).powi(3), "residual {v} at {r}");
            }
        }
    }

    #[test]
    fn thirteen_roots_recovered() {
        let want: Vec<f64> = (1..=13).map(|k| k as f64 / 14.0).collect();
        let p = RealPolynomial::from_roots(&want, 3.0).unwrap();
        let got = poly_real_roots(&p, -1.0, 2.0).unwrap();
        assert_roots(&got, &want, 1e-8);
    }

    #[test]
    fn no_real_roots_and_multiplicity() {
        let p = RealPolynomial::new(vec![1.0, 0.0, 1.0]).unwrap();
        assert!(poly_real_roots(&p, -10.0, 10.0).unwrap().is_empty());
        let q = RealPolynomial::from_roots(&[0.5, 0.5, -2.0], 1.0).unwrap();
        assert_roots(&poly_real_roots(&q, 0.0, 1.0).unwrap(), &[0.5], 1e-10);
        let c = RealPolynomial::new(vec![4.0]).unwrap();
        assert!(poly_real_roots(&c, 0.0, 1.0).unwrap().is_empty());
        assert!(RealPolynomial::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn endpoint_roots_found() {
        let p = RealPolynomial::from_roots(&[0.0, 1.0, 3.0], -2.0).unwrap();
        assert_roots(&poly_real_roots(&p, 0.0, 1.0).unwrap(), &[0.0, 1.0], 1e-14);
    }

    #[test]
    fn compensated_horner_beats_plain_near_root() {
        // (x − 1)^7 expanded, evaluated close to 1
        let p = RealPolynomial::from_roots(&[1.0; 7], 1.0).unwrap();
        let x = 1.0 + 1e-3;
        let exact = 1e-21;
        assert!((p.eval_compensated(x) - exact).abs() < (p.eval(x) - exact).abs() + 1e-30);
        assert!((p.eval_compensated(x) / exact - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn factored_polynomials_recovered(
            seeds in proptest::collection::vec(0.0f64..1.0, 1..=14),
            scale in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            // roots in [−1, 2] with minimum separation 0.1
            let n = seeds.len();
            let slack = 3.0 - 0.1 * (n as f64 - 1.0);
            let mut gaps: Vec<f64> = seeds.clone();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<f64> = gaps.iter().enumerate().map(|(k, g)| -1.0 + g * slack + 0.1 * k as f64).collect();
            let p = RealPolynomial::from_roots(&want, scale).unwrap();
            let got = poly_real_roots(&p, -1.5, 2.5).unwrap();
            prop_assert_eq!(got.len(), want.len(), "got {:?} want {:?}", got, want);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-8, "got {:?} want {:?}", got, want);
            }
        }

        #[test]
        fn returned_roots_have_small_residual(coeffs in proptest::collection::vec(-10.0f64..10.0, 2..=15)) {
            let p = RealPolynomial::new(coeffs).unwrap();
            if p.degree() >= 1 {
                let pn = p.normalized();
                for r in poly_real_roots(&p, -3.0, 3.0).unwrap() {
                    let dp = pn.derivative().eval(r).abs();
                    let resid = pn.eval_compensated(r).abs();
                    prop_assert!(resid <= pn.noise_bound(r) + 1e-12 * dp.max(1.0), "residual {} at {}", resid, r);
                }
            }
        }
    }
}
