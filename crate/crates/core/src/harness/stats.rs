//! Error counting, threshold selection and paired comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::detect::threshold;

/// Threshold grid `{0.01, 0.02, …, 1.00}`.
pub fn default_theta_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

/// Raw error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub total: u64,
    pub actives: u64,
    pub misses: u64,
    pub false_alarms: u64,
}

impl ErrorCounts {
    pub fn count(decisions: &[bool], truth: &[bool]) -> Self {
        assert_eq!(decisions.len(), truth.len(), "decision and truth lengths differ");
        let mut c = ErrorCounts::default();
        for (&d, &t) in decisions.iter().zip(truth) {
            c.total += 1;
            if t {
                c.actives += 1;
                c.misses += (!d) as u64;
            } else {
                c.false_alarms += d as u64;
            }
        }
        c
    }

    /// Counts of `a ≥ θ` against `truth` without materializing decisions.
    pub fn at_threshold(soft: &[f64], truth: &[bool], theta: f64) -> Self {
        let mut c = ErrorCounts::default();
        for (&a, &t) in soft.iter().zip(truth) {
            let d = a >= theta;
            c.total += 1;
            if t {
                c.actives += 1;
                c.misses += (!d) as u64;
            } else {
                c.false_alarms += d as u64;
            }
        }
        c
    }

    pub fn add(&mut self, o: &ErrorCounts) {
        self.total += o.total;
        self.actives += o.actives;
        self.misses += o.misses;
        self.false_alarms += o.false_alarms;
    }

    pub fn errors(&self) -> u64 {
        self.misses + self.false_alarms
    }

    pub fn p_err(&self) -> f64 {
        ratio(self.errors(), self.total)
    }

    /// Missed-detection rate; 0 without active devices.
    pub fn p_miss(&self) -> f64 {
        ratio(self.misses, self.actives)
    }

    /// False-alarm rate; 0 without inactive devices.
    pub fn p_fa(&self) -> f64 {
        ratio(self.false_alarms, self.total - self.actives)
    }

    /// Empirical activity rate.
    pub fn p_active(&self) -> f64 {
        ratio(self.actives, self.total)
    }

    /// Half-width of the 95% normal-approximation binomial interval on `p_err`.
    pub fn ci95(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let p = self.p_err();
        1.959_963_984_540_054 * (p * (1.0 - p) / self.total as f64).sqrt()
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `(p_miss, p_fa, p_err)` of hard decisions.
pub fn error_decompose(decisions: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let c = ErrorCounts::count(decisions, truth);
    (c.p_miss(), c.p_fa(), c.p_err())
}

/// Pooled counts over realizations at threshold `theta`.
pub fn pooled_counts<'a>(runs: impl IntoIterator<Item = (&'a [f64], &'a [bool])>, theta: f64) -> ErrorCounts {
    let mut c = ErrorCounts::default();
    for (soft, truth) in runs {
        c.add(&ErrorCounts::at_threshold(soft, truth, theta));
    }
    c
}

/// Threshold minimizing the pooled error over `grid` (smallest on ties) with its counts.
pub fn sweep_threshold_pooled(runs: &[(&[f64], &[bool])], grid: &[f64]) -> (f64, ErrorCounts) {
    assert!(!grid.is_empty(), "threshold grid must be nonempty");
    let mut best: Option<(f64, ErrorCounts)> = None;
    for &theta in grid {
        let c = pooled_counts(runs.iter().copied(), theta);
        match &best {
            Some((_, b)) if c.errors() >= b.errors() => {}
            _ => best = Some((theta, c)),
        }
    }
    best.expect("nonempty grid")
}

/// Single-realization form: `(θ*, min error)`.
pub fn sweep_threshold(soft: &[f64], truth: &[bool], grid: &[f64]) -> (f64, f64) {
    let (t, c) = sweep_threshold_pooled(&[(soft, truth)], grid);
    (t, c.p_err())
}

/// Fraction of misclassified devices after thresholding.
pub fn error_rate(soft: &[f64], truth: &[bool], theta: f64) -> f64 {
    let d = threshold(soft, theta);
    error_decompose(&d, truth).2
}

/// One-sided paired sign test of "`a` is smaller than `b`".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: u64,
    /// Pairs with `a > b`.
    pub losses: u64,
    pub ties: u64,
    /// `P[X ≥ wins]` for `X ~ Bin(wins + losses, 1/2)`.
    pub p_value: f64,
}

pub fn paired_sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal lengths");
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wins += 1;
        } else if x > y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n).expect("valid binomial");
        // P[X ≥ w] = 1 − P[X ≤ w − 1], evaluated through the upper tail
        bin.sf(wins - 1)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decompose_examples() {
        let t = [true, false, false, true];
        assert_eq!(error_decompose(&t, &t), (0.0, 0.0, 0.0));
        let flipped: Vec<bool> = t.iter().map(|v| !v).collect();
        assert_eq!(error_decompose(&flipped, &t), (1.0, 1.0, 1.0));
        let (m, f, e) = error_decompose(&[false, false, true, false], &[true, false, false, false]);
        assert_eq!(m, 1.0);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e, 0.5);
    }

    #[test]
    fn consistency_identity() {
        let soft = [0.9, 0.1, 0.4, 0.6, 0.0, 0.3, 1.0];
        let truth = [true, false, true, false, false, true, true];
        for theta in default_theta_grid() {
            let c = ErrorCounts::at_threshold(&soft, &truth, theta);
            let pa = c.p_active();
            assert!((c.p_err() - (c.p_miss() * pa + c.p_fa() * (1.0 - pa))).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_soft_picks_smallest_theta() {
        let truth = [true, false, false, true, false];
        let soft: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let (t, e) = sweep_threshold(&soft, &truth, &default_theta_grid());
        assert_eq!(t, 0.01);
        assert_eq!(e, 0.0);
    }

    #[test]
    fn endpoints_match_activity_rate() {
        let truth = [true, false, false, true, false, false, false, false];
        let soft = [0.7, 0.2, 0.0, 0.4, 0.05, 0.9, 0.0, 0.3];
        let pa = 2.0 / 8.0;
        assert_eq!(error_rate(&soft, &truth, 0.0), 1.0 - pa);
        assert_eq!(error_rate(&soft, &truth, 1.0 + 1e-9), pa);
        let (_, best) = sweep_threshold(&soft, &truth, &default_theta_grid());
        assert!(best <= pa.min(1.0 - pa));
    }

    #[test]
    fn sign_test_values() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        let b = [0.2, 0.3, 0.4, 0.5, 0.6];
        let t = paired_sign_test(&a, &b);
        assert_eq!((t.wins, t.losses, t.ties), (5, 0, 0));
        assert!((t.p_value - 1.0 / 32.0).abs() < 1e-12);
        let t = paired_sign_test(&b, &a);
        assert_eq!(t.p_value, 1.0);
        let t = paired_sign_test(&[0.0, 1.0], &[0.0, 2.0]);
        assert_eq!((t.wins, t.ties), (1, 1));
        assert!((t.p_value - 0.5).abs() < 1e-12);
    }
}
