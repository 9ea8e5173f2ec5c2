//! Entropy estimation from histograms.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::seed;

/// Bootstrap resamples used by default.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Plug-in entropy (bits) of a histogram.
pub fn plugin_entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n).map(|p| p * p.log2()).sum::<f64>()
}

/// Plug-in entropy plus the Miller–Madow correction `(K − 1) / (2n ln 2)`,
/// `K` the number of occupied cells.
pub fn miller_madow_entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count() as f64;
    plugin_entropy(counts) + (occupied - 1.0) / (2.0 * n as f64 * std::f64::consts::LN_2)
}

/// Multinomial resample of a histogram (same total), by sequential binomials.
pub fn resample<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Vec<u64> {
    let n: u64 = counts.iter().sum();
    let mut remaining_n = n;
    let mut remaining_mass = n;
    counts
        .iter()
        .map(|&c| {
            if remaining_n == 0 || c == 0 {
                remaining_mass -= c;
                return 0;
            }
            let draw = if c >= remaining_mass {
                remaining_n
            } else {
                let p = c as f64 / remaining_mass as f64;
                Binomial::new(remaining_n, p).expect("valid binomial").sample(rng)
            };
            remaining_n -= draw;
            remaining_mass -= c;
            draw
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub samples: u64,
    pub support: usize,
    pub plugin: f64,
    /// Bias-corrected point estimate.
    pub estimate: f64,
    /// 95% percentile bootstrap interval of the corrected estimator.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EntropyEstimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Miller–Madow estimate with a percentile bootstrap interval from
/// `resamples` multinomial resamples drawn from stream `seed`.
pub fn estimate_entropy(counts: &[u64], resamples: usize, seed: u64) -> EntropyEstimate {
    let samples: u64 = counts.iter().sum();
    let estimate = miller_madow_entropy(counts);
    let mut rng = seed::stream_rng(seed, 0);
    let mut boot: Vec<f64> =
        (0..resamples).map(|_| miller_madow_entropy(&resample(counts, &mut rng))).collect();
    boot.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        if boot.is_empty() {
            return estimate;
        }
        boot[((boot.len() - 1) as f64 * q).round() as usize]
    };
    EntropyEstimate {
        samples,
        support: counts.iter().filter(|&&c| c > 0).count(),
        plugin: plugin_entropy(counts),
        estimate,
        ci_low: quantile(0.025),
        ci_high: quantile(0.975),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plugin_examples() {
        assert_eq!(plugin_entropy(&[5, 5, 5, 5]), 2.0);
        assert_eq!(plugin_entropy(&[7]), 0.0);
        assert_eq!(plugin_entropy(&[]), 0.0);
        assert_eq!(miller_madow_entropy(&[7, 0]), 0.0);
        let mm = miller_madow_entropy(&[1, 1]);
        assert!((mm - (1.0 + 1.0 / (4.0 * std::f64::consts::LN_2))).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_covers_truth() {
        // A multinomial draw of 10^5 samples from the law (1/2, 1/4, 1/8, 1/8).
        let truth = 1.75;
        let mut rng = seed::stream_rng(3, 0);
        let scaled = resample(&[50_000, 25_000, 12_500, 12_500], &mut rng);
        let est = estimate_entropy(&scaled, BOOTSTRAP_RESAMPLES, 5);
        assert!(est.ci_low <= est.estimate && est.estimate <= est.ci_high);
        assert!((est.estimate - truth).abs() < 0.02);
        assert!(est.half_width() < 0.02);
    }

    #[test]
    fn estimate_is_seeded() {
        let counts = [10, 20, 30, 40];
        assert_eq!(estimate_entropy(&counts, 50, 1), estimate_entropy(&counts, 50, 1));
    }

    proptest! {
        #[test]
        fn resample_preserves_total(counts in proptest::collection::vec(0u64..1000, 1..12), s in any::<u64>()) {
            let mut rng = seed::stream_rng(s, 1);
            let r = resample(&counts, &mut rng);
            prop_assert_eq!(r.iter().sum::<u64>(), counts.iter().sum::<u64>());
            prop_assert!(r.iter().zip(&counts).all(|(&a, &c)| c > 0 || a == 0));
        }

        #[test]
        fn plugin_bounded_by_log_support(counts in proptest::collection::vec(1u64..1000, 1..20)) {
            let h = plugin_entropy(&counts);
            prop_assert!(h >= 0.0 && h <= (counts.len() as f64).log2() + 1e-12);
        }
    }
}
