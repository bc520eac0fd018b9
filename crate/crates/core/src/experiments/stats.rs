//! Percentiles, exact binomial confidence bounds and volume retention.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// Solves `beta_reg(a, b, p) = target` for `p` by bisection. The regularized
/// incomplete beta is increasing in `p`, so 200 halvings pin it to machine precision.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) lower confidence bound for a binomial proportion.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> f64 {
    assert!(trials >= 1 && successes <= trials, "need 0 <= successes <= trials, trials >= 1");
    if successes == 0 {
        return 0.0;
    }
    if successes == trials {
        return (alpha / 2.0).powf(1.0 / trials as f64);
    }
    beta_quantile(successes as f64, (trials - successes + 1) as f64, alpha / 2.0)
}

/// Exact (Clopper-Pearson) upper confidence bound for a binomial proportion.
pub fn clopper_pearson_upper(successes: u64, trials: u64, alpha: f64) -> f64 {
    assert!(trials >= 1 && successes <= trials, "need 0 <= successes <= trials, trials >= 1");
    if successes == trials {
        return 1.0;
    }
    if successes == 0 {
        return 1.0 - (alpha / 2.0).powf(1.0 / trials as f64);
    }
    beta_quantile((successes + 1) as f64, (trials - successes) as f64, 1.0 - alpha / 2.0)
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        assert!(!values.is_empty(), "summary of empty data");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Summary {
            count: n,
            mean,
            std_dev: var.sqrt(),
            min: sorted[0],
            max: sorted[n - 1],
            p50: percentile(&sorted, 0.50),
            p90: percentile(&sorted, 0.90),
            p95: percentile(&sorted, 0.95),
            p99: percentile(&sorted, 0.99),
            p999: percentile(&sorted, 0.999),
        }
    }
}

/// Protected-pool volume as a percentage of baseline volume.
pub fn volume_retention(protected_volume: f64, baseline_volume: f64) -> f64 {
    assert!(baseline_volume > 0.0, "baseline volume must be positive");
    100.0 * protected_volume / baseline_volume
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn clopper_pearson_examples() {
        // Frozen from an independent beta-quantile evaluation.
        assert_abs_diff_eq!(clopper_pearson_lower(3678, 3678, 0.05), 0.998_997_5, epsilon = 1e-7);
        assert_abs_diff_eq!(clopper_pearson_lower(20014, 20014, 0.05), 0.999_815_7, epsilon = 1e-7);
        assert_abs_diff_eq!(clopper_pearson_lower(100_000, 100_000, 0.05), 0.999_963_1, epsilon = 1e-7);
        assert_abs_diff_eq!(clopper_pearson_lower(15, 20, 0.05), 0.508_954_15, epsilon = 1e-7);
        assert_abs_diff_eq!(clopper_pearson_lower(7, 10, 0.05), 0.347_547_15, epsilon = 1e-7);
        assert_eq!(clopper_pearson_lower(0, 10, 0.05), 0.0);
        assert_eq!(clopper_pearson_upper(10, 10, 0.05), 1.0);
    }

    #[test]
    fn full_success_closed_form_matches_bisection() {
        let n = 50;
        let closed = clopper_pearson_lower(n, n, 0.05);
        assert_abs_diff_eq!(closed, beta_quantile(n as f64, 1.0, 0.025), epsilon = 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.5);
        let s = Summary::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.min, s.max, s.p50, s.mean), (1.0, 3.0, 2.0, 2.0));
        assert_eq!(s.std_dev, 1.0);
    }

    #[test]
    fn retention_examples() {
        assert_abs_diff_eq!(volume_retention(61.39e6, 58.46e6), 105.0, epsilon = 0.1);
        assert_abs_diff_eq!(volume_retention(21.71e6, 20.77e6), 104.5, epsilon = 0.1);
        assert_eq!(volume_retention(5.0, 5.0), 100.0);
    }

    proptest! {
        #[test]
        fn lower_bound_increases_with_trials(n in 1u64..100_000) {
            prop_assert!(clopper_pearson_lower(n, n, 0.05) < clopper_pearson_lower(n + 1, n + 1, 0.05));
        }

        #[test]
        fn bounds_bracket_the_estimate(n in 1u64..500, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).round() as u64;
            let lo = clopper_pearson_lower(k, n, 0.05);
            let hi = clopper_pearson_upper(k, n, 0.05);
            let phat = k as f64 / n as f64;
            prop_assert!(lo <= phat + 1e-12 && phat <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}
