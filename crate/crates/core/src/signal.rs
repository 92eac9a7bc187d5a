//! Pilots, received-signal synthesis under Rayleigh block fading, and sample covariances.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::NetworkRealization;
use crate::linalg::{hermitize, CMatrix};

/// Draws one CN(0, `var`) sample.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// L×N pilot matrix with i.i.d. CN(0,1) entries, one column per device.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pub p: CMatrix,
}

impl PilotSet {
    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn num_devices(&self) -> usize {
        self.p.ncols()
    }

    /// Column `i` as a contiguous slice.
    pub fn column(&self, i: usize) -> &[Complex64] {
        let l = self.p.nrows();
        &self.p.as_slice()[i * l..(i + 1) * l]
    }

    /// Pilot set restricted to the given device columns.
    pub fn select(&self, cols: &[usize]) -> PilotSet {
        PilotSet {
            p: self.p.select_columns(cols),
        }
    }
}

pub fn gen_pilots<R: Rng + ?Sized>(rng: &mut R, l: usize, n: usize) -> Result<PilotSet> {
    if l == 0 {
        return Err(Error::param("L", "pilot length must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("N", "at least one device is required"));
    }
    Ok(PilotSet {
        p: DMatrix::from_fn(l, n, |_, _| cn(rng, 1.0)),
    })
}

/// Per-AP observation: sample covariance and, optionally, the raw signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cov: CMatrix,
    pub y: Option<CMatrix>,
    pub m: usize,
    pub noise: f64,
}

/// `Y·Yᴴ / M`, exactly Hermitian.
pub fn sample_covariance(y: &CMatrix, m: usize) -> Result<CMatrix> {
    if m == 0 {
        return Err(Error::InvalidInput("sample covariance needs M >= 1".into()));
    }
    if y.ncols() != m {
        return Err(Error::InvalidInput(format!(
            "signal has {} columns but M = {m}",
            y.ncols()
        )));
    }
    let mut s = y * y.adjoint() / Complex64::new(m as f64, 0.0);
    hermitize(&mut s);
    Ok(s)
}

/// Received signal at one AP.
///
/// `gains[i]` is the path loss from transmitter `i` (global index, matching the
/// pilot columns) to this AP; `active[i]` its activity.
pub fn synthesize_ap<R: Rng + ?Sized>(
    pilots: &PilotSet,
    gains: &[f64],
    active: &[bool],
    m: usize,
    noise: f64,
    keep_signal: bool,
    rng: &mut R,
) -> Result<Observation> {
    let n = pilots.num_devices();
    if gains.len() != n || active.len() != n {
        return Err(Error::InvalidInput(format!(
            "pilots cover {n} devices but {} gains and {} activities were given",
            gains.len(),
            active.len()
        )));
    }
    if m == 0 {
        return Err(Error::param("M", "antenna count must be at least 1"));
    }
    if !(noise > 0.0) {
        return Err(Error::param(
            "noise",
            format!("noise variance must be positive, got {noise}"),
        ));
    }
    let l = pilots.len();
    let act: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    // Y = P_act · G + Z with G_{k,m} = √γ_k · h_{k,m}
    let mut g = CMatrix::zeros(act.len(), m);
    for (k, &i) in act.iter().enumerate() {
        let s = gains[i].sqrt();
        for c in 0..m {
            g[(k, c)] = cn(rng, 1.0) * s;
        }
    }
    let pa = pilots.p.select_columns(&act);
    let mut y = if act.is_empty() { CMatrix::zeros(l, m) } else { &pa * &g };
    for v in y.iter_mut() {
        *v += cn(rng, noise);
    }
    let cov = sample_covariance(&y, m)?;
    Ok(Observation {
        cov,
        y: keep_signal.then_some(y),
        m,
        noise,
    })
}

/// Observations at each AP listed in `aps`, with AP `j` drawing its fading and
/// noise from `rng_for_ap(j)`.
pub fn synthesize_rx<R: Rng>(
    realization: &NetworkRealization,
    pilots: &PilotSet,
    aps: &[usize],
    m: usize,
    noise: f64,
    keep_signal: bool,
    mut rng_for_ap: impl FnMut(usize) -> R,
) -> Result<Vec<Observation>> {
    let active: Vec<bool> = realization.transmitters().map(|(_, a, _)| a).collect();
    aps.iter()
        .map(|&j| {
            let gains = realization.gains_to(j)?;
            let mut rng = rng_for_ap(j);
            synthesize_ap(pilots, &gains, &active, m, noise, keep_signal, &mut rng)
        })
        .collect()
}

/// Interference covariance diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceDiag {
    pub diag: Vec<f64>,
    /// Mean |off-diagonal| over mean |diagonal|; zero when there is no interference.
    pub off_diag_ratio: f64,
}

/// Diagonal of `Σ_{i∉excluded} a_i γ_i p_i p_iᴴ` and its off-diagonal ratio.
///
/// `interfering[i]` selects the transmitters counted as interference.
pub fn true_interference_diag(
    pilots: &PilotSet,
    gains: &[f64],
    active: &[bool],
    interfering: &[bool],
) -> Result<InterferenceDiag> {
    let n = pilots.num_devices();
    if gains.len() != n || active.len() != n || interfering.len() != n {
        return Err(Error::InvalidInput("interference diagnostic: length mismatch".into()));
    }
    let l = pilots.len();
    let mut x = CMatrix::zeros(l, l);
    for i in 0..n {
        if !(active[i] && interfering[i]) {
            continue;
        }
        let p = pilots.column(i);
        let g = Complex64::new(gains[i], 0.0);
        for c in 0..l {
            let pc = p[c].conj() * g;
            for r in 0..l {
                x[(r, c)] += p[r] * pc;
            }
        }
    }
    let diag: Vec<f64> = (0..l).map(|k| x[(k, k)].re).collect();
    let mean_diag = diag.iter().map(|d| d.abs()).sum::<f64>() / l as f64;
    let off_diag_ratio = if l < 2 || mean_diag == 0.0 {
        0.0
    } else {
        let mut off = 0.0;
        for r in 0..l {
            for c in 0..l {
                if r != c {
                    off += x[(r, c)].norm();
                }
            }
        }
        off / (l * (l - 1)) as f64 / mean_diag
    };
    Ok(InterferenceDiag { diag, off_diag_ratio })
}

/// Writes covariances row-major as little-endian f64 pairs `(re, im)`, no header.
pub fn write_covariances(path: &Path, covs: &[CMatrix]) -> Result<()> {
    let mut buf = Vec::new();
    for c in covs {
        for r in 0..c.nrows() {
            for k in 0..c.ncols() {
                buf.extend_from_slice(&c[(r, k)].re.to_le_bytes());
                buf.extend_from_slice(&c[(r, k)].im.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads `count` L×L covariances written by [`write_covariances`].
pub fn read_covariances(path: &Path, l: usize) -> Result<Vec<CMatrix>> {
    let bytes = std::fs::read(path)?;
    let per = l * l * 16;
    if l == 0 || bytes.len() % per != 0 {
        return Err(Error::InvalidInput(format!(
            "{} bytes is not a whole number of {l}x{l} complex matrices",
            bytes.len()
        )));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    Ok((0..bytes.len() / per)
        .map(|k| {
            CMatrix::from_fn(l, l, |r, c| {
                let o = k * per + (r * l + c) * 16;
                Complex64::new(f(o), f(o + 8))
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eye, rel_frobenius};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pilot_column_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = gen_pilots(&mut rng, 40, 500).unwrap();
        let norms: Vec<f64> = (0..500)
            .map(|i| p.column(i).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let mean = norms.iter().sum::<f64>() / 500.0;
        // ‖p‖² is a sum of L unit exponentials: variance L
        let se = (40.0f64 / 500.0).sqrt();
        assert!((mean - 40.0).abs() < 3.0 * se, "mean {mean}");
        let one = gen_pilots(&mut rng, 40, 1).unwrap();
        assert_eq!(one.num_devices(), 1);
        assert!(gen_pilots(&mut rng, 0, 3).is_err());
    }

    #[test]
    fn pilot_cross_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = 16;
        let trials = 2000;
        let vals: Vec<f64> = (0..trials)
            .map(|_| {
                let p = gen_pilots(&mut rng, l, 2).unwrap();
                crate::linalg::dot_conj(p.column(0), p.column(1)).norm_sqr() / l as f64
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0)).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / (trials as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn sample_covariance_basics() {
        let z = CMatrix::zeros(3, 5);
        assert_eq!(sample_covariance(&z, 5).unwrap(), CMatrix::zeros(3, 3));
        let id = eye(4);
        let s = sample_covariance(&id, 4).unwrap();
        assert!(rel_frobenius(&s, &(eye(4) / Complex64::new(4.0, 0.0))) < 1e-15);
        assert!(sample_covariance(&CMatrix::zeros(3, 0), 0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 100_000;
        let y = DMatrix::from_fn(4, m, |_, _| cn(&mut rng, 1.0));
        let s = sample_covariance(&y, m).unwrap();
        assert!(rel_frobenius(&s, &eye(4)) < 0.02);
        assert_eq!(s, s.adjoint());
    }

    #[test]
    fn pure_noise_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = gen_pilots(&mut rng, 6, 3).unwrap();
        let m = 4000;
        let obs = synthesize_ap(&p, &[1.0; 3], &[false; 3], m, 1.0, true, &mut rng).unwrap();
        let se = (1.0 / m as f64).sqrt();
        for k in 0..6 {
            assert!((obs.cov[(k, k)].re - 1.0).abs() < 4.0 * se);
            for c in 0..6 {
                if c != k {
                    assert!(obs.cov[(k, c)].norm() < 5.0 * se);
                }
            }
        }
        let y = obs.y.unwrap();
        assert!(rel_frobenius(&sample_covariance(&y, m).unwrap(), &obs.cov) < 1e-12);
        let ev = obs.cov.clone().symmetric_eigenvalues();
        let tr: f64 = (0..6).map(|k| obs.cov[(k, k)].re).sum();
        assert!(ev.iter().all(|&e| e >= -1e-10 * tr));
    }

    #[test]
    fn single_device_concentrates_on_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = gen_pilots(&mut rng, 4, 1).unwrap();
        let obs = synthesize_ap(&p, &[1.0], &[true], 10_000, 1e-12, false, &mut rng).unwrap();
        let pp = &p.p * p.p.adjoint();
        assert!(rel_frobenius(&obs.cov, &pp) < 0.05);
    }

    #[test]
    fn covariance_law_over_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = 4;
        let p = gen_pilots(&mut rng, l, 3).unwrap();
        let gains = [0.8, 1.5, 0.3];
        let active = [true, false, true];
        let noise = 0.2;
        let k = 10_000;
        let mut acc = CMatrix::zeros(l, l);
        for _ in 0..k {
            let obs = synthesize_ap(&p, &gains, &active, 1, noise, false, &mut rng).unwrap();
            acc += obs.cov;
        }
        acc /= Complex64::new(k as f64, 0.0);
        let mut expect = eye(l) * Complex64::new(noise, 0.0);
        for i in 0..3 {
            if active[i] {
                let c = p.p.column(i);
                expect += c * c.adjoint() * Complex64::new(gains[i], 0.0);
            }
        }
        assert!(rel_frobenius(&acc, &expect) < 0.05);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = gen_pilots(&mut rng, 4, 3).unwrap();
        assert!(matches!(
            synthesize_ap(&p, &[1.0; 2], &[true; 3], 4, 1.0, false, &mut rng),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn interference_diag_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = gen_pilots(&mut rng, 5, 2).unwrap();
        let none = true_interference_diag(&p, &[1.0, 1.0], &[true, true], &[false, false]).unwrap();
        assert!(none.diag.iter().all(|&d| d == 0.0));

        let mut e = CMatrix::zeros(5, 1);
        e[(0, 0)] = Complex64::new(3.0, 4.0);
        let single = PilotSet { p: e };
        let d = true_interference_diag(&single, &[0.5], &[true], &[true]).unwrap();
        assert_eq!(d.diag[0], 0.5 * 25.0);
        assert!(d.diag[1..].iter().all(|&v| v == 0.0));

        let ratio = |n: usize, rng: &mut ChaCha8Rng| {
            let p = gen_pilots(rng, 40, n).unwrap();
            true_interference_diag(&p, &vec![1.0; n], &vec![true; n], &vec![true; n])
                .unwrap()
                .off_diag_ratio
        };
        let r10 = ratio(10, &mut rng);
        let r1000 = ratio(1000, &mut rng);
        assert!(r1000 < 1.0 && r1000 < r10, "{r10} {r1000}");
    }

    #[test]
    fn covariance_dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.bin");
        let a = CMatrix::from_fn(3, 3, |r, c| Complex64::new(r as f64, c as f64 - 0.5));
        let b = eye(3);
        write_covariances(&path, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 2 * 9 * 16);
        let back = read_covariances(&path, 3).unwrap();
        assert_eq!(back, vec![a, b]);
    }
}
