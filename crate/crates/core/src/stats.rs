//! Chi-square machinery for the integrity budget: central quantiles,
//! the noncentral CDF via its Poisson-weighted series, and the bisection
//! solving for the noncentrality parameter of a false-alarm /
//! missed-detection pair.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("degrees of freedom must be >= 1, got {0}")]
    BadDof(usize),
    #[error("bisection for the noncentrality parameter did not converge")]
    NoConvergence,
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Central chi-square CDF with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(k as f64 / 2.0, x / 2.0)
}

/// Central chi-square quantile.
pub fn chi2_quantile(p: f64, k: usize) -> Result<f64, StatsError> {
    if !(0.0 < p && p < 1.0) {
        return Err(StatsError::BadProbability(p));
    }
    if k < 1 {
        return Err(StatsError::BadDof(k));
    }
    Ok(ChiSquared::new(k as f64).expect("valid dof").inverse_cdf(p))
}

/// Noncentral chi-square CDF, evaluated as the Poisson(lambda/2) mixture of
/// central chi-square CDFs with k + 2j degrees of freedom.
pub fn noncentral_chi2_cdf(x: f64, k: usize, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return chi2_cdf(x, k);
    }
    let half_lambda = lambda / 2.0;
    let half_k = k as f64 / 2.0;
    let half_x = x / 2.0;
    // Terms are negligible well past the Poisson bulk.
    let j_max = (half_lambda + 12.0 * half_lambda.sqrt() + 40.0).ceil() as usize;
    let log_hl = half_lambda.ln();
    let mut acc = 0.0;
    for j in 0..=j_max {
        let log_w = -half_lambda + (j as f64) * log_hl - ln_gamma(j as f64 + 1.0);
        let w = log_w.exp();
        if w == 0.0 && (j as f64) > half_lambda {
            break;
        }
        acc += w * gamma_lr(half_k + j as f64, half_x);
    }
    acc.clamp(0.0, 1.0)
}

/// Detection threshold and noncentrality parameter for an integrity budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPair {
    /// (1 - p_fa) quantile of the central chi-square with k dof.
    pub chi2_threshold: f64,
    /// Smallest noncentrality with missed-detection probability <= p_md.
    pub lambda_th: f64,
}

/// Solve the false-alarm / missed-detection budget: the detection threshold is
/// the (1 - p_fa) central quantile, and `lambda_th` is found by bisection as
/// the smallest noncentrality whose CDF at the threshold drops to `p_md`.
pub fn solve_lambda_th(p_fa: f64, p_md: f64, k: usize) -> Result<ThresholdPair, StatsError> {
    if !(0.0 < p_fa && p_fa < 1.0) {
        return Err(StatsError::BadProbability(p_fa));
    }
    if !(0.0 < p_md && p_md < 1.0) {
        return Err(StatsError::BadProbability(p_md));
    }
    let threshold = chi2_quantile(1.0 - p_fa, k)?;
    // At lambda = 0 the CDF equals 1 - p_fa; it decreases monotonically in
    // lambda, so bracket upward first.
    let mut lo = 0.0;
    let mut hi = (k as f64).max(1.0);
    let mut expansions = 0;
    while noncentral_chi2_cdf(threshold, k, hi) > p_md {
        hi *= 2.0;
        expansions += 1;
        if expansions > 80 {
            return Err(StatsError::NoConvergence);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if noncentral_chi2_cdf(threshold, k, mid) > p_md {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-9 * hi.max(1.0) {
            break;
        }
    }
    Ok(ThresholdPair { chi2_threshold: threshold, lambda_th: hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn central_quantile_table_values() {
        // Standard chi-square table.
        assert_relative_eq!(chi2_quantile(0.95, 1).unwrap(), 3.841, max_relative = 1e-3);
        assert_relative_eq!(chi2_quantile(0.99, 5).unwrap(), 15.086, max_relative = 1e-3);
        assert_relative_eq!(chi2_quantile(0.999, 10).unwrap(), 29.588, max_relative = 1e-3);
    }

    #[test]
    fn noncentral_reduces_to_central_at_zero_lambda() {
        for x in [0.5, 3.0, 11.0] {
            assert_relative_eq!(
                noncentral_chi2_cdf(x, 4, 0.0),
                chi2_cdf(x, 4),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn noncentral_cdf_matches_monte_carlo() {
        // Independent check of the series: sample sums of squared shifted
        // normals.
        let k = 6;
        let lambda = 14.0;
        let delta = (lambda / k as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 200_000;
        let x = 22.0;
        let mut hits = 0usize;
        for _ in 0..trials {
            let mut s = 0.0;
            for _ in 0..k {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                s += (z + delta) * (z + delta);
            }
            if s <= x {
                hits += 1;
            }
        }
        let emp = hits as f64 / trials as f64;
        let cdf = noncentral_chi2_cdf(x, k, lambda);
        let sigma = (cdf * (1.0 - cdf) / trials as f64).sqrt();
        assert!(
            (emp - cdf).abs() < 5.0 * sigma + 1e-4,
            "emp {emp} vs series {cdf} (sigma {sigma})"
        );
    }

    #[test]
    fn lambda_th_monotone_in_p_md() {
        let a = solve_lambda_th(0.01, 0.05, 8).unwrap();
        let b = solve_lambda_th(0.01, 0.005, 8).unwrap();
        assert!(b.lambda_th > a.lambda_th);
        assert_eq!(a.chi2_threshold, b.chi2_threshold);
    }

    #[test]
    fn lambda_th_forward_cdf_check() {
        let pair = solve_lambda_th(1e-3, 1e-2, 10).unwrap();
        let forward = noncentral_chi2_cdf(pair.chi2_threshold, 10, pair.lambda_th);
        assert!((forward - 1e-2).abs() < 1e-6, "forward CDF {forward}");
    }

    #[test]
    fn lambda_th_large_dof_is_stable() {
        let pair = solve_lambda_th(0.01, 0.05, 250).unwrap();
        assert!(pair.lambda_th.is_finite() && pair.lambda_th > 0.0);
        let forward = noncentral_chi2_cdf(pair.chi2_threshold, 250, pair.lambda_th);
        assert!((forward - 0.05).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_lambda_th(0.0, 0.1, 5).is_err());
        assert!(solve_lambda_th(0.1, 1.0, 5).is_err());
        assert!(chi2_quantile(0.5, 0).is_err());
    }
}
