//! Multivariate Bernoulli activity priors.
//!
//! A prior covers the devices of one cell, indexed locally `0..n`, with
//! `pmf(a) ∝ exp(Σ_ω c_ω Π_{i∈ω} a_i)`. Group structure is remembered so
//! that activities can be sampled exactly.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default mixing weight used for deterministic group activity.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Largest device count for which general priors are sampled or enumerated.
pub const MAX_ENUMERATION: usize = 20;

/// How a prior was constructed; selects the exact sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorKind {
    /// Independent devices with common activity probability.
    Iid { p: f64 },
    /// Consecutive device pairs `(2k, 2k+1)` with correlation `eta`.
    Pairs { p: f64, eta: f64 },
    /// Groups whose devices are active together with probability `p[k]`.
    Groups { groups: Vec<Vec<usize>>, p: Vec<f64> },
    /// Arbitrary coefficients.
    General,
}

/// MVB prior for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MvbPrior {
    n: usize,
    kind: PriorKind,
    /// Subsets (sorted local indices) with nonzero coefficients.
    terms: Vec<(Vec<usize>, f64)>,
    /// For each device, indices into `terms` of the subsets containing it.
    membership: Vec<Vec<usize>>,
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(name, format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::param("epsilon", format!("must be positive, got {eps}")));
    }
    Ok(())
}

/// Joint table `(P11, P01, P10, P00)` for a correlated pair.
pub fn pair_joint(p: f64, eta: f64) -> (f64, f64, f64, f64) {
    let p11 = eta * p + (1.0 - eta) * p * p;
    let p01 = (1.0 - eta) * (p - p * p);
    let p00 = 1.0 + (eta - 2.0) * p + (1.0 - eta) * p * p;
    (p11, p01, p01, p00)
}

/// Coefficients of all nonempty subsets of a group of size `size`
/// (as bitmasks over the group) for the all-or-nothing instance.
fn group_coefficients(size: usize, p: f64, eps: f64) -> Vec<(u32, f64)> {
    let mix = ((1.0 - p) / eps).ln();
    let mut out = Vec::with_capacity((1usize << size) - 1);
    for mask in 1u32..(1u32 << size) {
        let k = mask.count_ones() as usize;
        let c = if k < size {
            if k.is_multiple_of(2) {
                mix
            } else {
                -mix
            }
        } else if k % 2 == 1 {
            (p / (1.0 - p)).ln()
        } else {
            (p * (1.0 - p) / (eps * eps)).ln()
        };
        out.push((mask, c));
    }
    out
}

impl MvbPrior {
    fn build(n: usize, kind: PriorKind, raw: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (mut set, c) in raw {
            if set.is_empty() {
                return Err(Error::InvalidInput("MVB subsets must be nonempty".into()));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite MVB coefficient for {set:?}")));
            }
            set.sort_unstable();
            let len = set.len();
            set.dedup();
            if set.len() != len {
                return Err(Error::InvalidInput(format!("repeated device in MVB subset {set:?}")));
            }
            if let Some(&max) = set.last() {
                if max >= n {
                    return Err(Error::InvalidInput(format!(
                        "MVB subset {set:?} refers to a device outside 0..{n}"
                    )));
                }
            }
            *merged.entry(set).or_insert(0.0) += c;
        }
        let terms: Vec<(Vec<usize>, f64)> = merged.into_iter().filter(|(_, c)| *c != 0.0).collect();
        let mut membership = vec![Vec::new(); n];
        for (t, (set, _)) in terms.iter().enumerate() {
            for &i in set {
                membership[i].push(t);
            }
        }
        Ok(MvbPrior {
            n,
            kind,
            terms,
            membership,
        })
    }

    /// Independent devices, each active with probability `p`.
    pub fn iid(n: usize, p: f64) -> Result<Self> {
        check_prob("p_a", p)?;
        let c = (p / (1.0 - p)).ln();
        Self::build(n, PriorKind::Iid { p }, (0..n).map(|i| (vec![i], c)).collect())
    }

    /// Devices `(2k, 2k+1)` form correlated pairs with marginal `p` and correlation `eta`.
    ///
    /// `eta = 1` (partners always equal) uses the all-or-nothing group
    /// coefficients with weight `eps` on the mixed states.
    pub fn pairs(n: usize, p: f64, eta: f64, eps: f64) -> Result<Self> {
        check_prob("p_a", p)?;
        if !n.is_multiple_of(2) {
            return Err(Error::param(
                "N",
                format!("pairs prior needs an even device count, got {n}"),
            ));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::param(
                "eta",
                format!("correlation must lie in [0, 1], got {eta}"),
            ));
        }
        let kind = PriorKind::Pairs { p, eta };
        if eta == 1.0 {
            check_eps(eps)?;
            let g = group_coefficients(2, p, eps);
            let mut raw = Vec::new();
            for k in 0..n / 2 {
                for &(mask, c) in &g {
                    let set: Vec<usize> = (0..2).filter(|b| mask & (1 << b) != 0).map(|b| 2 * k + b).collect();
                    raw.push((set, c));
                }
            }
            return Self::build(n, kind, raw);
        }
        let (p11, p01, p10, p00) = pair_joint(p, eta);
        if !(p11 > 0.0 && p01 > 0.0 && p10 > 0.0 && p00 > 0.0) {
            return Err(Error::param(
                "eta",
                format!("p_a = {p}, eta = {eta} gives a non-positive joint probability"),
            ));
        }
        let single = (p10 / p00).ln();
        let pair = (p11 * p00 / (p01 * p10)).ln();
        let mut raw = Vec::new();
        for k in 0..n / 2 {
            raw.push((vec![2 * k], single));
            raw.push((vec![2 * k + 1], single));
            raw.push((vec![2 * k, 2 * k + 1], pair));
        }
        Self::build(n, kind, raw)
    }

    /// All-or-nothing groups: the devices of group `k` share one activity, on with probability `p[k]`.
    pub fn groups(n: usize, groups: Vec<Vec<usize>>, p: Vec<f64>, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if groups.len() != p.len() {
            return Err(Error::param(
                "p_k",
                format!("{} groups but {} probabilities", groups.len(), p.len()),
            ));
        }
        let mut seen = vec![false; n];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::param("groups", "groups must be nonempty"));
            }
            if g.len() > 16 {
                return Err(Error::param("groups", format!("group size {} exceeds 16", g.len())));
            }
            for &i in g {
                if i >= n || seen[i] {
                    return Err(Error::param(
                        "groups",
                        format!("device {i} is out of range or in two groups"),
                    ));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::param("groups", "groups must cover every device"));
        }
        let mut raw = Vec::new();
        for (g, &pk) in groups.iter().zip(&p) {
            check_prob("p_k", pk)?;
            for (mask, c) in group_coefficients(g.len(), pk, eps) {
                let set: Vec<usize> = (0..g.len()).filter(|b| mask & (1 << b) != 0).map(|b| g[b]).collect();
                raw.push((set, c));
            }
        }
        Self::build(n, PriorKind::Groups { groups, p }, raw)
    }

    /// Consecutive groups of `size` devices sharing probability `p`.
    pub fn uniform_groups(n: usize, size: usize, p: f64, eps: f64) -> Result<Self> {
        if size == 0 || !n.is_multiple_of(size) {
            return Err(Error::param(
                "group_size",
                format!("group size {size} must divide the device count {n}"),
            ));
        }
        let groups: Vec<Vec<usize>> = (0..n / size).map(|k| (k * size..(k + 1) * size).collect()).collect();
        let probs = vec![p; groups.len()];
        Self::groups(n, groups, probs, eps)
    }

    /// Arbitrary coefficients.
    pub fn general(n: usize, terms: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        Self::build(n, PriorKind::General, terms)
    }

    pub fn num_devices(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &PriorKind {
        &self.kind
    }

    pub fn terms(&self) -> &[(Vec<usize>, f64)] {
        &self.terms
    }

    /// Whether every coefficient is zero.
    pub fn is_flat(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of subset `set`, zero if absent.
    pub fn coefficient(&self, set: &[usize]) -> f64 {
        let mut s = set.to_vec();
        s.sort_unstable();
        self.terms.iter().find(|(t, _)| *t == s).map_or(0.0, |(_, c)| *c)
    }

    /// Unnormalized log-probability `Σ_ω c_ω Π_{i∈ω} a_i`.
    pub fn log_score(&self, a: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(set, c)| c * set.iter().map(|&i| a[i]).product::<f64>())
            .sum()
    }

    /// Slope of the prior term along `a_i`, divided by `m`.
    pub fn linear_coeff(&self, a: &[f64], i: usize, m: usize) -> f64 {
        let mut s = 0.0;
        for &t in &self.membership[i] {
            let (set, c) = &self.terms[t];
            let mut prod = *c;
            for &k in set {
                if k != i {
                    prod *= a[k];
                }
            }
            s += prod;
        }
        s / m as f64
    }

    /// Normalized pmf over all `2^n` states, indexed by bitmask (bit `i` = device `i`).
    pub fn enumerate_pmf(&self) -> Result<Vec<f64>> {
        if self.n > MAX_ENUMERATION {
            return Err(Error::UnsupportedPrior(format!(
                "enumeration needs at most {MAX_ENUMERATION} devices, got {}",
                self.n
            )));
        }
        let masks: Vec<u32> = self
            .terms
            .iter()
            .map(|(set, _)| set.iter().fold(0u32, |m, &i| m | (1 << i)))
            .collect();
        let scores: Vec<f64> = (0u32..(1u32 << self.n))
            .map(|state| {
                masks
                    .iter()
                    .zip(&self.terms)
                    .filter(|(m, _)| state & **m == **m)
                    .map(|(_, (_, c))| c)
                    .sum()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / z).collect())
    }

    /// One exact draw of the activity vector.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<bool>> {
        match &self.kind {
            PriorKind::Iid { p } => Ok((0..self.n).map(|_| rng.random::<f64>() < *p).collect()),
            PriorKind::Pairs { p, eta } => {
                let (p11, p01, p10, _) = pair_joint(*p, *eta);
                let mut out = Vec::with_capacity(self.n);
                for _ in 0..self.n / 2 {
                    let u = rng.random::<f64>();
                    let (a, b) = if u < p11 {
                        (true, true)
                    } else if u < p11 + p01 {
                        (false, true)
                    } else if u < p11 + p01 + p10 {
                        (true, false)
                    } else {
                        (false, false)
                    };
                    out.push(a);
                    out.push(b);
                }
                Ok(out)
            }
            PriorKind::Groups { groups, p } => {
                let mut out = vec![false; self.n];
                for (g, &pk) in groups.iter().zip(p) {
                    let on = rng.random::<f64>() < pk;
                    for &i in g {
                        out[i] = on;
                    }
                }
                Ok(out)
            }
            PriorKind::General => {
                let pmf = self.enumerate_pmf()?;
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut state = pmf.len() - 1;
                for (s, w) in pmf.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        state = s;
                        break;
                    }
                }
                Ok((0..self.n).map(|i| state & (1 << i) != 0).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn marginal(pmf: &[f64], i: usize) -> f64 {
        pmf.iter()
            .enumerate()
            .filter(|(s, _)| s & (1 << i) != 0)
            .map(|(_, w)| w)
            .sum()
    }

    fn joint11(pmf: &[f64], i: usize, j: usize) -> f64 {
        pmf.iter()
            .enumerate()
            .filter(|(s, _)| s & (1 << i) != 0 && s & (1 << j) != 0)
            .map(|(_, w)| w)
            .sum()
    }

    #[test]
    fn iid_coefficients() {
        let p = MvbPrior::iid(4, 0.5).unwrap();
        assert!(p.is_flat());
        let p = MvbPrior::iid(4, 0.05).unwrap();
        assert!((p.coefficient(&[2]) - (1.0f64 / 19.0).ln()).abs() < 1e-15);
        assert!(((1.0f64 / 19.0).ln() + 2.9444).abs() < 1e-4);
        assert!(p.terms().iter().all(|(s, _)| s.len() == 1));
        assert!(MvbPrior::iid(4, 0.0).is_err());
        assert!(MvbPrior::iid(4, 1.0).is_err());
    }

    #[test]
    fn iid_pmf_is_product() {
        let p = MvbPrior::iid(3, 0.2).unwrap();
        let pmf = p.enumerate_pmf().unwrap();
        for (s, w) in pmf.iter().enumerate() {
            let k = (s as u32).count_ones() as i32;
            assert!((w - 0.2f64.powi(k) * 0.8f64.powi(3 - k)).abs() < 1e-12);
        }
    }

    #[test]
    fn pairs_reduce_to_iid_at_zero_correlation() {
        let p = MvbPrior::pairs(4, 0.05, 0.0, DEFAULT_EPSILON).unwrap();
        let iid = MvbPrior::iid(4, 0.05).unwrap();
        assert!(p.coefficient(&[0, 1]).abs() < 1e-10);
        assert!((p.coefficient(&[0]) - iid.coefficient(&[0])).abs() < 1e-12);
    }

    #[test]
    fn pairs_marginal_and_correlation() {
        let p = MvbPrior::pairs(2, 0.05, 0.5, DEFAULT_EPSILON).unwrap();
        let pmf = p.enumerate_pmf().unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m0 = marginal(&pmf, 0);
        let m1 = marginal(&pmf, 1);
        assert!((m0 - 0.05).abs() < 1e-10 && (m1 - 0.05).abs() < 1e-10);
        let cov = joint11(&pmf, 0, 1) - m0 * m1;
        let rho = cov / (m0 * (1.0 - m0)).sqrt() / (m1 * (1.0 - m1)).sqrt();
        assert!((rho - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pairs_validation() {
        assert!(MvbPrior::pairs(3, 0.1, 0.2, DEFAULT_EPSILON).is_err());
        assert!(MvbPrior::pairs(4, 0.1, 1.5, DEFAULT_EPSILON).is_err());
        assert!(MvbPrior::pairs(4, 0.1, -0.1, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn pairs_full_correlation() {
        let p = MvbPrior::pairs(4, 0.1, 1.0, 1e-9).unwrap();
        let pmf = p.enumerate_pmf().unwrap();
        assert!((marginal(&pmf, 0) - 0.1).abs() < 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = p.sample(&mut rng).unwrap();
            assert_eq!(a[0], a[1]);
            assert_eq!(a[2], a[3]);
        }
    }

    #[test]
    fn groups_concentrate_on_equal_states() {
        let g = MvbPrior::uniform_groups(3, 3, 0.1, 1e-6).unwrap();
        let pmf = g.enumerate_pmf().unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pmf[0] + pmf[7] >= 0.999);
        assert!((pmf[7] - 0.1).abs() < 1e-5);
        let mixed = |eps: f64| {
            let pmf = MvbPrior::uniform_groups(3, 3, 0.1, eps)
                .unwrap()
                .enumerate_pmf()
                .unwrap();
            1.0 - pmf[0] - pmf[7]
        };
        assert!(mixed(5e-7) < mixed(1e-6));
        // even group size uses the other full-set coefficient
        let g4 = MvbPrior::uniform_groups(4, 4, 0.3, 1e-8)
            .unwrap()
            .enumerate_pmf()
            .unwrap();
        assert!((g4[15] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn singleton_groups_are_iid() {
        let g = MvbPrior::uniform_groups(3, 1, 0.2, 1e-6).unwrap();
        assert!((g.coefficient(&[1]) - (0.2f64 / 0.8).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_score_examples() {
        let iid = MvbPrior::iid(5, 0.05).unwrap();
        assert_eq!(iid.log_score(&[0.0; 5]), 0.0);
        assert!((iid.log_score(&[1.0; 5]) - 5.0 * (0.05f64 / 0.95).ln()).abs() < 1e-12);
        let pr = MvbPrior::pairs(2, 0.1, 0.3, DEFAULT_EPSILON).unwrap();
        let expect = 2.0 * pr.coefficient(&[0]) + pr.coefficient(&[0, 1]);
        assert!((pr.log_score(&[1.0, 1.0]) - expect).abs() < 1e-14);
    }

    #[test]
    fn linear_coeff_examples() {
        let iid = MvbPrior::iid(3, 0.05).unwrap();
        assert!((iid.linear_coeff(&[0.3, 0.9, 0.1], 1, 60) - (0.05f64 / 0.95).ln() / 60.0).abs() < 1e-15);
        let pr = MvbPrior::pairs(2, 0.1, 0.3, DEFAULT_EPSILON).unwrap();
        let (cs, cp) = (pr.coefficient(&[0]), pr.coefficient(&[0, 1]));
        assert!((pr.linear_coeff(&[0.0, 0.0], 0, 10) - cs / 10.0).abs() < 1e-15);
        assert!((pr.linear_coeff(&[0.0, 1.0], 0, 10) - (cs + cp) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn general_prior_validation_and_sampling() {
        assert!(MvbPrior::general(3, vec![(vec![], 1.0)]).is_err());
        assert!(MvbPrior::general(3, vec![(vec![3], 1.0)]).is_err());
        assert!(MvbPrior::general(3, vec![(vec![1, 1], 1.0)]).is_err());
        let big = MvbPrior::general(21, vec![(vec![0], -1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(big.sample(&mut rng), Err(Error::UnsupportedPrior(_))));
        let g = MvbPrior::general(2, vec![(vec![0], 2.0), (vec![0, 1], -3.0)]).unwrap();
        let pmf = g.enumerate_pmf().unwrap();
        let draws = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let a = g.sample(&mut rng).unwrap();
            counts[a[0] as usize | (a[1] as usize) << 1] += 1;
        }
        for s in 0..4 {
            let f = counts[s] as f64 / draws as f64;
            let se = (pmf[s] * (1.0 - pmf[s]) / draws as f64).sqrt();
            assert!((f - pmf[s]).abs() < 4.0 * se + 1e-12, "state {s}: {f} vs {}", pmf[s]);
        }
    }

    #[test]
    fn iid_sampler_mean() {
        let p = MvbPrior::iid(500, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 400;
        let mean = (0..draws)
            .map(|_| p.sample(&mut rng).unwrap().iter().filter(|&&a| a).count() as f64)
            .sum::<f64>()
            / draws as f64;
        let se = (500.0 * 0.05 * 0.95 / draws as f64).sqrt();
        assert!((mean - 25.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn group_sampler_all_equal() {
        let g = MvbPrior::uniform_groups(12, 3, 0.2, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = g.sample(&mut rng).unwrap();
            for k in 0..4 {
                assert!(a[3 * k] == a[3 * k + 1] && a[3 * k + 1] == a[3 * k + 2]);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn linear_coeff_is_multilinear_difference(
            bits in proptest::collection::vec(proptest::bool::ANY, 6),
            i in 0usize..6,
            p in 0.01f64..0.99,
            eta in 0.0f64..0.95,
        ) {
            let a: Vec<f64> = bits.iter().map(|&b| b as u8 as f64).collect();
            for prior in [
                MvbPrior::iid(6, p).unwrap(),
                MvbPrior::pairs(6, p, eta, DEFAULT_EPSILON).unwrap(),
                MvbPrior::uniform_groups(6, 3, p, 1e-4).unwrap(),
            ] {
                let mut on = a.clone();
                on[i] = 1.0;
                let mut off = a.clone();
                off[i] = 0.0;
                let fd = (prior.log_score(&on) - prior.log_score(&off)) / 7.0;
                let c = prior.linear_coeff(&a, i, 7);
                proptest::prop_assert!((fd - c).abs() <= 1e-12 * fd.abs().max(1.0));
            }
        }
    }
}
