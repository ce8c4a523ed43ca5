//! The generic discrete count distribution `Gd(mu, v)`.
//!
//! A single two-moment family covering any mean/variance pair: Binomial for
//! under-dispersed targets (`mu > v`), Poisson at equal dispersion, and
//! Negative-Binomial for over-dispersion (`mu < v`). The Poisson is the
//! continuous bridge between the other two branches as `v -> mu`.
//!
//! Moment matching sets `m = mu^2 / |mu - v|` and `p = 1 - min(mu/v, v/mu)`.
//! On the Negative-Binomial branch the real-valued shape `m` gives mean and
//! variance exactly. A Binomial needs an integer trial count, so `m` is
//! rounded up to `m_int = ceil(m)` and `p` reset to `mu / m_int`: the mean
//! stays exact, the variance picks up an `O(1/m_int)` rounding error, and
//! rounding up only enlarges the support (observed counts stay inside it).

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Relative tolerance routing near-equal mean/variance to the Poisson
/// branch; guards the shape `m` against overflow as `v -> mu`.
pub const BRANCH_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GdError {
    #[error("mean must be finite and positive, got {0}")]
    InvalidMean(f64),
    #[error("variance must be finite and positive, got {0}")]
    InvalidVariance(f64),
}

/// Branch selected for a `(mu, v)` pair, with its branch-specific parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GdBranch {
    /// `mu > v`: Binomial with `m_int` trials and success probability `p`.
    Binomial { m_int: u64, p: f64 },
    /// `mu = v` (within [`BRANCH_EPSILON`]): Poisson with rate `mu`.
    Poisson,
    /// `mu < v`: Negative-Binomial with real shape `m` and probability `p`,
    /// pmf `C(x + m - 1, x) p^x (1 - p)^m`.
    NegativeBinomial { m: f64, p: f64 },
}

/// Moment-matched parameters of `Gd(mu, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdParams {
    pub mu: f64,
    pub v: f64,
    pub branch: GdBranch,
}

/// Match a distribution to the target mean `mu` and variance `v`.
pub fn gd_from_moments(mu: f64, v: f64) -> Result<GdParams, GdError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(GdError::InvalidMean(mu));
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(GdError::InvalidVariance(v));
    }
    let branch = if (mu - v).abs() <= BRANCH_EPSILON * mu {
        GdBranch::Poisson
    } else if mu > v {
        let m = mu * mu / (mu - v);
        // When m sits within rounding of an integer, use that integer:
        // ceiling a barely-exceeded integer would inflate a near-degenerate
        // variance to O(mu / m_int). With v -> 0 and integer mu this
        // collapses to a point mass at mu, the correct limit.
        let fraction = m - m.floor();
        let m_int = if fraction <= 1e-6 && m >= 1.0 { m.floor() as u64 } else { m.ceil() as u64 };
        GdBranch::Binomial { m_int, p: mu / m_int as f64 }
    } else {
        GdBranch::NegativeBinomial { m: mu * mu / (v - mu), p: (v - mu) / v }
    };
    Ok(GdParams { mu, v, branch })
}

impl GdParams {
    /// Exact mean of the matched distribution (equals `mu` on every branch).
    pub fn analytic_mean(&self) -> f64 {
        match self.branch {
            GdBranch::Binomial { m_int, p } => m_int as f64 * p,
            GdBranch::Poisson => self.mu,
            GdBranch::NegativeBinomial { m, p } => m * p / (1.0 - p),
        }
    }

    /// Exact variance of the matched distribution: equals `v` on the Poisson
    /// and Negative-Binomial branches; differs by the trial-count rounding
    /// on the Binomial branch.
    pub fn analytic_variance(&self) -> f64 {
        match self.branch {
            GdBranch::Binomial { m_int, p } => m_int as f64 * p * (1.0 - p),
            GdBranch::Poisson => self.mu,
            GdBranch::NegativeBinomial { m, p } => m * p / ((1.0 - p) * (1.0 - p)),
        }
    }

    /// Log probability mass at `x`, computed in log space via log-Gamma.
    /// Returns negative infinity outside the support (Binomial branch only).
    pub fn log_pmf(&self, x: u64) -> f64 {
        let xf = x as f64;
        match self.branch {
            GdBranch::Binomial { m_int, p } => {
                if x > m_int {
                    return f64::NEG_INFINITY;
                }
                let n = m_int as f64;
                // 1 - p computed from the exact mean identity p = mu / m_int.
                let q = (n - self.mu) / n;
                let ln_coeff = ln_gamma(n + 1.0) - ln_gamma(xf + 1.0) - ln_gamma(n - xf + 1.0);
                let tail = if m_int == x { 0.0 } else { (n - xf) * q.ln() };
                let head = if x == 0 { 0.0 } else { xf * p.ln() };
                ln_coeff + head + tail
            }
            GdBranch::Poisson => xf * self.mu.ln() - self.mu - ln_gamma(xf + 1.0),
            GdBranch::NegativeBinomial { m, p } => {
                let ln_coeff = ln_gamma(xf + m) - ln_gamma(m) - ln_gamma(xf + 1.0);
                // 1 - p = mu / v exactly under moment matching.
                let q = self.mu / self.v;
                let head = if x == 0 { 0.0 } else { xf * p.ln() };
                ln_coeff + head + m * q.ln()
            }
        }
    }

    /// Draw one value; deterministic for a given generator state.
    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match self.branch {
            GdBranch::Binomial { m_int, p } => {
                rand_distr::Binomial::new(m_int, p.min(1.0)).expect("valid binomial").sample(rng)
            }
            GdBranch::Poisson => sample_poisson(self.mu, rng),
            GdBranch::NegativeBinomial { m, p } => {
                // Gamma-Poisson mixture with the matching marginal.
                let scale = p / (1.0 - p);
                let lambda =
                    rand_distr::Gamma::new(m, scale).expect("valid gamma").sample(rng);
                sample_poisson(lambda, rng)
            }
        }
    }
}

fn sample_poisson(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    rand_distr::Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::Discrete;

    #[test]
    fn binomial_branch_hand_values() {
        let gd = gd_from_moments(3.0, 1.5).unwrap();
        assert_eq!(gd.branch, GdBranch::Binomial { m_int: 6, p: 0.5 });
        assert!((gd.log_pmf(3) - 0.3125f64.ln()).abs() < 1e-12);
        assert_eq!(gd.log_pmf(7), f64::NEG_INFINITY);
    }

    #[test]
    fn poisson_branch_hand_values() {
        let gd = gd_from_moments(2.0, 2.0).unwrap();
        assert_eq!(gd.branch, GdBranch::Poisson);
        assert!((gd.log_pmf(0) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_binomial_branch_hand_values() {
        let gd = gd_from_moments(2.0, 4.0).unwrap();
        match gd.branch {
            GdBranch::NegativeBinomial { m, p } => {
                assert!((m - 2.0).abs() < 1e-12);
                assert!((p - 0.5).abs() < 1e-12);
            }
            other => panic!("wrong branch {other:?}"),
        }
        assert!((gd.analytic_mean() - 2.0).abs() < 1e-12);
        assert!((gd.log_pmf(0) - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_moments() {
        assert!(gd_from_moments(0.0, 1.0).is_err());
        assert!(gd_from_moments(1.0, -1.0).is_err());
        assert!(gd_from_moments(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn log_pmf_matches_reference_distributions() {
        let cases = [(3.0, 1.5), (5.0, 2.0), (2.0, 2.0), (2.0, 4.0), (10.0, 30.0)];
        for (mu, v) in cases {
            let gd = gd_from_moments(mu, v).unwrap();
            for x in 0..20u64 {
                let ours = gd.log_pmf(x);
                let reference = match gd.branch {
                    GdBranch::Binomial { m_int, p } => {
                        if x > m_int {
                            f64::NEG_INFINITY
                        } else {
                            statrs::distribution::Binomial::new(p, m_int).unwrap().ln_pmf(x)
                        }
                    }
                    GdBranch::Poisson => {
                        statrs::distribution::Poisson::new(mu).unwrap().ln_pmf(x)
                    }
                    // statrs swaps the roles of p and 1 - p.
                    GdBranch::NegativeBinomial { m, p } => {
                        statrs::distribution::NegativeBinomial::new(m, 1.0 - p)
                            .unwrap()
                            .ln_pmf(x)
                    }
                };
                if ours.is_finite() || reference.is_finite() {
                    assert!(
                        (ours - reference).abs() < 1e-9,
                        "mu={mu} v={v} x={x}: {ours} vs {reference}"
                    );
                }
            }
        }
    }

    #[test]
    fn near_degenerate_poisson_draws_zero() {
        let gd = gd_from_moments(1e-12, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(gd.sample(&mut rng), 0);
        }
    }

    #[test]
    fn sample_moments_match_targets() {
        let gd = gd_from_moments(5.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 1_000_000usize;
        let draws: Vec<u64> = (0..n).map(|_| gd.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        let var =
            draws.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let mean_se = (10.0f64 / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * mean_se, "mean {mean}");
        // Monte-Carlo standard error of the sample variance.
        let m4 = draws.iter().map(|&x| (x as f64 - mean).powi(4)).sum::<f64>() / n as f64;
        let var_se = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - 10.0).abs() < 3.0 * var_se, "variance {var}");
    }

    #[test]
    fn sampler_agrees_with_pmf() {
        // Chi-square goodness of fit of a million Binomial-branch draws
        // against log_pmf, at significance 0.01.
        let gd = gd_from_moments(3.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000usize;
        let mut observed = [0u64; 7];
        for _ in 0..n {
            observed[gd.sample(&mut rng) as usize] += 1;
        }
        let mut chi2 = 0.0;
        for (x, &obs) in observed.iter().enumerate() {
            let expected = n as f64 * gd.log_pmf(x as u64).exp();
            chi2 += (obs as f64 - expected).powi(2) / expected;
        }
        // Upper 0.01 quantile of chi-square with 6 degrees of freedom.
        assert!(chi2 < 16.812, "chi-square statistic {chi2}");
    }

    #[test]
    fn poisson_bridge_from_both_sides() {
        let mu = 5.0f64;
        let poisson = gd_from_moments(mu, mu).unwrap();
        for v in [mu * (1.0 - 1e-4), mu * (1.0 + 1e-4)] {
            let gd = gd_from_moments(mu, v).unwrap();
            assert!(gd.branch != GdBranch::Poisson, "v = {v} must not route to Poisson");
            let max_dev = (0..60)
                .map(|x| (gd.log_pmf(x).exp() - poisson.log_pmf(x).exp()).abs())
                .fold(0.0, f64::max);
            assert!(max_dev <= 1e-3, "v = {v}: max pmf deviation {max_dev}");
        }
    }

    proptest! {
        #[test]
        fn moment_matching_is_exact(
            mu in 0.5f64..500.0,
            ratio in 0.05f64..20.0,
        ) {
            let v = mu * ratio;
            let gd = gd_from_moments(mu, v).unwrap();
            prop_assert!((gd.analytic_mean() - mu).abs() <= 1e-12 * mu);
            match gd.branch {
                GdBranch::Binomial { m_int, .. } => {
                    // Rounding the trial count perturbs the variance by at
                    // most (mu - v) / m_int.
                    let bound = (mu - v) / m_int as f64 + 1e-12 * v;
                    prop_assert!((gd.analytic_variance() - v).abs() <= bound);
                    prop_assert!(m_int as f64 >= mu.ceil());
                }
                _ => prop_assert!((gd.analytic_variance() - v).abs() <= 1e-12 * v),
            }
        }

        #[test]
        fn pmf_normalizes(mu in 0.5f64..50.0, ratio in 0.05f64..20.0) {
            let v = mu * ratio;
            let gd = gd_from_moments(mu, v).unwrap();
            let hi = match gd.branch {
                GdBranch::Binomial { m_int, .. } => m_int,
                _ => (mu + 40.0 * v.sqrt()).ceil() as u64 + 100,
            };
            let total: f64 = (0..=hi).map(|x| gd.log_pmf(x).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
        }
    }
}
