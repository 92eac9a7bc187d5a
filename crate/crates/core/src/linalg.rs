//! Small dense complex linear algebra used by the detectors.
//!
//! Matrices are at most a few dozen rows, so everything is stored fully in
//! `nalgebra::DMatrix<Complex64>` and Hermitian structure is enforced by
//! explicit symmetrisation where it matters.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// `n × n` identity.
pub fn eye(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `(A + Aᴴ) / 2`, in place.
pub fn hermitize(a: &mut CMatrix) {
    let n = a.nrows();
    for r in 0..n {
        let d = a[(r, r)].re;
        a[(r, r)] = Complex64::new(d, 0.0);
        for c in (r + 1)..n {
            let avg = (a[(r, c)] + a[(c, r)].conj()) * 0.5;
            a[(r, c)] = avg;
            a[(c, r)] = avg.conj();
        }
    }
}

/// `xᴴ A y`.
pub fn quad_form(x: &[Complex64], a: &CMatrix, y: &[Complex64]) -> Complex64 {
    let n = x.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for c in 0..n {
        let mut col = Complex64::new(0.0, 0.0);
        for r in 0..n {
            col += x[r].conj() * a[(r, c)];
        }
        acc += col * y[c];
    }
    acc
}

/// `out = A v` for a square `A`.
pub fn mat_vec_into(a: &CMatrix, v: &[Complex64], out: &mut [Complex64]) {
    let n = v.len();
    out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
    for (c, &vc) in v.iter().enumerate() {
        if vc.re == 0.0 && vc.im == 0.0 {
            continue;
        }
        let col = a.column(c);
        for (o, &ar) in out.iter_mut().zip(col.iter()).take(n) {
            *o += ar * vc;
        }
    }
}

/// `vᴴ w`.
pub fn dot_conj(v: &[Complex64], w: &[Complex64]) -> Complex64 {
    v.iter()
        .zip(w)
        .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
}

/// Sherman–Morrison update of a Hermitian inverse.
///
/// With `u = S v` (where `S` is the current inverse) and `t = d·scale`,
/// replaces `S` by the inverse of `S⁻¹ + t v vᴴ`:
/// `S ← S − t u uᴴ / (1 + t vᴴ S v)`.
///
/// `u` and `vsv = vᴴ S v` are passed in since every caller already has them.
pub fn rank1_update_prepared(inverse: &mut CMatrix, u: &[Complex64], vsv: f64, scale: f64, d: f64) -> Result<()> {
    if d == 0.0 {
        return Ok(());
    }
    let t = d * scale;
    let denom = 1.0 + t * vsv;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "rank-1 update denominator {denom:.3e} (step {d:.3e}, scale {scale:.3e})"
        )));
    }
    let coef = t / denom;
    let n = u.len();
    for c in 0..n {
        let uc = u[c].conj() * coef;
        let mut col = inverse.column_mut(c);
        for r in 0..n {
            col[r] -= u[r] * uc;
        }
    }
    // keep the diagonal exactly real
    for r in 0..n {
        let v = inverse[(r, r)].re;
        inverse[(r, r)] = Complex64::new(v, 0.0);
    }
    Ok(())
}

/// Sherman–Morrison update computing `S v` and `vᴴ S v` itself.
pub fn rank1_update_inverse(inverse: &mut CMatrix, v: &[Complex64], scale: f64, d: f64) -> Result<()> {
    let mut u = vec![Complex64::new(0.0, 0.0); v.len()];
    mat_vec_into(inverse, v, &mut u);
    let vsv = dot_conj(v, &u).re;
    rank1_update_prepared(inverse, &u, vsv, scale, d)
}

/// Cholesky factorisation of a Hermitian positive-definite matrix.
pub fn cholesky(a: &CMatrix) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    a.clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))
}

/// `log det A` for Hermitian positive-definite `A`.
pub fn log_det_hpd(a: &CMatrix) -> Result<f64> {
    let ch = cholesky(a)?;
    let l = ch.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive-definite matrix, symmetrised.
pub fn inverse_hpd(a: &CMatrix) -> Result<CMatrix> {
    let mut inv = cholesky(a)?.inverse();
    hermitize(&mut inv);
    Ok(inv)
}

/// `log det A + tr(A⁻¹ B)` evaluated through one factorisation.
pub fn logdet_plus_trace(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let ch = cholesky(a)?;
    let l = ch.l_dirty();
    let logdet: f64 = (0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    let sol = ch.solve(b);
    let tr: f64 = (0..a.nrows()).map(|i| sol[(i, i)].re).sum();
    Ok(logdet + tr)
}

/// `‖S A − I‖_F / √n`.
pub fn inverse_residual(inverse: &CMatrix, a: &CMatrix) -> f64 {
    let n = a.nrows();
    let prod = inverse * a;
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            acc += (prod[(r, c)] - Complex64::new(target, 0.0)).norm_sqr();
        }
    }
    acc.sqrt() / (n as f64).sqrt()
}

/// Relative Frobenius distance `‖A − B‖_F / ‖B‖_F`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let num = (a - b).norm();
    let den = b.norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hpd(n: usize, rng: &mut impl Rng) -> CMatrix {
        let g = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let mut a = &g * g.adjoint() + eye(n) * Complex64::new(0.5, 0.0);
        hermitize(&mut a);
        a
    }

    #[test]
    fn rank1_zero_step_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hpd(6, &mut rng);
        let mut inv = inverse_hpd(&a).unwrap();
        let before = inv.clone();
        let v: Vec<_> = (0..6).map(|k| Complex64::new(k as f64, 1.0)).collect();
        rank1_update_inverse(&mut inv, &v, 2.0, 0.0).unwrap();
        assert_eq!(inv, before);
    }

    #[test]
    fn rank1_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_hpd(8, &mut rng);
            let mut inv = inverse_hpd(&a).unwrap();
            let v: Vec<_> = (0..8)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let scale = 0.3 + rng.random::<f64>();
            let d = rng.random::<f64>() - 0.2;
            let vv = CVector::from_column_slice(&v);
            let updated = &a + (&vv * vv.adjoint()) * Complex64::new(d * scale, 0.0);
            rank1_update_inverse(&mut inv, &v, scale, d).unwrap();
            let direct = inverse_hpd(&updated).unwrap();
            assert!(rel_frobenius(&inv, &direct) < 1e-10);
        }
    }

    #[test]
    fn rank1_rejects_indefinite_step() {
        let a = eye(3);
        let mut inv = a.clone();
        let v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let err = rank1_update_inverse(&mut inv, &v, 1.0, -1.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn logdet_trace_of_identity() {
        let a = eye(4) * Complex64::new(2.0, 0.0);
        let b = eye(4);
        let v = logdet_plus_trace(&a, &b).unwrap();
        assert!((v - (4.0 * 2f64.ln() + 2.0)).abs() < 1e-14);
    }
}
