//! Estimates, confidence half-widths, and distribution-fit statistics.
//!
//! All verdicts in this crate use normal-approximation bands; the z values
//! below are the only band levels the tests and reports refer to.

use serde::Serialize;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_900_4;
/// Two-sided 99.9% normal quantile.
pub const Z_999: f64 = 3.290_526_731_491_925_5;
/// Three-sigma band used for moment verdicts.
pub const Z_3SIGMA: f64 = 3.0;

/// A Monte Carlo estimate with its half-width at some band level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
    pub n: u64,
}

impl Estimate {
    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }

    /// True when `other` lies inside this estimate's band.
    pub fn covers(&self, other: f64) -> bool {
        (self.value - other).abs() <= self.half_width
    }
}

/// Sample mean with a `z * s / sqrt(n)` half-width.
///
/// Heavy-tailed samples inflate `s` and therefore surface as wide bands;
/// nothing is clipped or trimmed.
pub fn mean_estimate(samples: &[f64], z: f64) -> Estimate {
    let n = samples.len();
    assert!(n >= 2, "need at least two samples for a half-width");
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    Estimate {
        value: mean,
        half_width: z * sd / (n as f64).sqrt(),
        n: n as u64,
    }
}

/// Binomial proportion with a normal-approximation half-width.
pub fn binomial_estimate(successes: u64, trials: u64, z: f64) -> Estimate {
    assert!(trials > 0, "binomial estimate needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    Estimate {
        value: p,
        half_width: z * (p * (1.0 - p) / n).sqrt(),
        n: trials,
    }
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width: the empirical CDF of `n`
/// draws stays within this of the true CDF with probability `1 - delta`.
pub fn dkw_epsilon(n: u64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Kolmogorov-Smirnov statistic of sorted samples against a CDF.
///
/// Tied samples are grouped so laws with atoms are compared correctly: at
/// each distinct value the right limits are matched directly and the left
/// limits through the CDF just below the value.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i + 1;
        while j < n && sorted[j] == v {
            j += 1;
        }
        sup = sup.max((cdf(v) - j as f64 / nf).abs());
        sup = sup.max((cdf(v.next_down()) - i as f64 / nf).abs());
        i = j;
    }
    sup
}

/// Critical KS value at significance `alpha` (asymptotic form).
pub fn ks_critical(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Sup distance between the empirical CDFs of two sorted samples.
///
/// Scans the merged order once; ties within and across the samples are
/// handled by advancing both counters past a shared value before comparing.
pub fn two_sample_ks(sorted_a: &[f64], sorted_b: &[f64]) -> f64 {
    assert!(!sorted_a.is_empty() && !sorted_b.is_empty(), "both samples must be nonempty");
    let (na, nb) = (sorted_a.len() as f64, sorted_b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < sorted_a.len() || j < sorted_b.len() {
        let v = match (sorted_a.get(i), sorted_b.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < sorted_a.len() && sorted_a[i] == v {
            i += 1;
        }
        while j < sorted_b.len() && sorted_b[j] == v {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_estimate_matches_hand_computation() {
        let e = mean_estimate(&[1.0, 2.0, 3.0, 4.0], 3.0);
        assert!((e.value - 2.5).abs() < 1e-15);
        // Sample sd of {1,2,3,4} is sqrt(5/3).
        let expect = 3.0 * (5.0f64 / 3.0).sqrt() / 2.0;
        assert!((e.half_width - expect).abs() < 1e-12);
    }

    #[test]
    fn binomial_estimate_is_symmetric_at_half() {
        let e = binomial_estimate(50, 100, 2.0);
        assert!((e.value - 0.5).abs() < 1e-15);
        assert!((e.half_width - 2.0 * 0.05).abs() < 1e-12);
    }

    #[test]
    fn ks_of_exact_uniform_grid_is_small() {
        let n = 1000;
        let sorted: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&sorted, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "got {d}");
    }

    #[test]
    fn dkw_width_shrinks_with_n() {
        assert!(dkw_epsilon(1_000_000, 1e-6) < dkw_epsilon(10_000, 1e-6));
    }

    #[test]
    fn two_sample_ks_hand_examples() {
        // Identical samples agree exactly, ties included.
        let a = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(two_sample_ks(&a, &a), 0.0);
        // Disjoint samples differ maximally.
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[5.0, 6.0]), 1.0);
        // {1,2} vs {1,3}: after value 2 the first CDF is 1, the second 1/2.
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[1.0, 3.0]), 0.5);
        // Unequal sizes: {1} vs {1,2} peaks at 1 - 1/2 after value 1.
        assert_eq!(two_sample_ks(&[1.0], &[1.0, 2.0]), 0.5);
    }
}
