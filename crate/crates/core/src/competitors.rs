//! Baseline procedures for the same hypothesis: the normal-approximation
//! Chen–Qin test, empirical and wild bootstraps of `T_CQ`, and two
//! Welch–Satterthwaite style chi-square calibrations.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::DataMatrix;
use crate::error::{check_alpha, check_resamples, Error, Result};
use crate::parallel::count_indices;
use crate::randomization::{conditional_sd, differenced_gram};
use crate::result::{Method, TestResult};
use crate::rng::{fill_signs, uniform_index, RngSeed};
use crate::stats::{t_cq_statistic, GramCache};

fn require_rows(what: &'static str, need: usize, x1: &DataMatrix, x2: &DataMatrix) -> Result<()> {
    let got = x1.rows().min(x2.rows());
    if got < need {
        return Err(Error::TooFewObservations { what, need, got });
    }
    Ok(())
}

/// Normal-approximation test: reject when `T_CQ / sigma_hat` exceeds the standard
/// normal `1 - alpha` quantile. `sigma_hat` is the exact conditional standard
/// deviation of the sign-flipped differenced statistic.
pub fn cq_test(x1: &DataMatrix, x2: &DataMatrix, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    require_rows("CQ test", 4, x1, x2)?;
    let statistic = t_cq_statistic(x1, x2)?;
    let sigma = conditional_sd(&differenced_gram(x1, x2)?);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("estimated standard deviation of T_CQ is zero".into()));
    }
    let norm = Normal::standard();
    let z = statistic / sigma;
    Ok(TestResult {
        statistic,
        p_value: 1.0 - norm.cdf(z),
        reject: z > norm.inverse_cdf(1.0 - alpha),
        alpha,
        method: Method::Cq,
        b_resamples: 0,
        seed: None,
    })
}

/// Count-weighted `T_CQ` of a with-replacement resample: `c1[a]` copies of row `a`
/// of group one, and so on. Pairs of copies of the same row contribute its
/// squared norm.
fn resampled_statistic(gram: &GramCache, c1: &[f64], c2: &[f64]) -> f64 {
    let self_pairs = |m: usize, c: &[f64], diag: &dyn Fn(usize) -> f64| {
        let s: f64 = (0..m).map(|a| c[a] * (c[a] - 1.0) / 2.0 * diag(a)).sum();
        let mf = m as f64;
        2.0 * s / (mf * (mf - 1.0))
    };
    gram.weighted_statistic(c1, c2)
        + self_pairs(gram.m1(), c1, &|a| gram.g11(a, a))
        + self_pairs(gram.m2(), c2, &|a| gram.g22(a, a))
}

fn resample_counts(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    for _ in 0..n {
        c[uniform_index(rng, n)] += 1.0;
    }
    c
}

/// Empirical bootstrap: resample each group's centered rows with replacement
/// and recompute `T_CQ`. Each draw is `O(n^2)` through the centered Gram cache.
pub fn empirical_bootstrap_test(x1: &DataMatrix, x2: &DataMatrix, b: usize, alpha: f64, seed: RngSeed) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_resamples(b)?;
    require_rows("empirical bootstrap", 2, x1, x2)?;
    let observed = t_cq_statistic(x1, x2)?;
    let gram = GramCache::from_samples(&x1.centered(), &x2.centered())?;
    let exceed = count_indices(b, |i| {
        let mut rng = seed.rng(i as u64);
        let c1 = resample_counts(&mut rng, gram.m1());
        let c2 = resample_counts(&mut rng, gram.m2());
        resampled_statistic(&gram, &c1, &c2) >= observed
    });
    Ok(TestResult::resampled(Method::Eb, observed, exceed, b, alpha, seed))
}

/// Wild bootstrap with Rademacher multipliers on the centered rows.
pub fn wild_bootstrap_test(x1: &DataMatrix, x2: &DataMatrix, b: usize, alpha: f64, seed: RngSeed) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_resamples(b)?;
    require_rows("wild bootstrap", 2, x1, x2)?;
    let observed = t_cq_statistic(x1, x2)?;
    let gram = GramCache::from_samples(&x1.centered(), &x2.centered())?;
    let exceed = count_indices(b, |i| {
        let mut rng = seed.rng(i as u64);
        let mut e1 = vec![0.0; gram.m1()];
        let mut e2 = vec![0.0; gram.m2()];
        fill_signs(&mut rng, &mut e1);
        fill_signs(&mut rng, &mut e2);
        gram.weighted_statistic(&e1, &e2) >= observed
    });
    Ok(TestResult::resampled(Method::Wb, observed, exceed, b, alpha, seed))
}

/// Scaled chi-square `beta_scale * chi2(dof)` matching a target mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Params {
    pub beta_scale: f64,
    pub dof: f64,
}

impl Chi2Params {
    /// Solves `beta * dof = mean` and `2 beta^2 dof = variance`.
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(Error::Degenerate(format!("trace estimate {mean} is not positive")));
        }
        if !(variance > 0.0) {
            return Err(Error::Degenerate(format!("variance estimate {variance} is not positive")));
        }
        Ok(Self {
            beta_scale: variance / (2.0 * mean),
            dof: 2.0 * mean * mean / variance,
        })
    }

    fn quantile(&self, q: f64) -> Result<f64> {
        let chi = ChiSquared::new(self.dof).map_err(|e| Error::Degenerate(e.to_string()))?;
        Ok(chi.inverse_cdf(q))
    }

    fn survival(&self, x: f64) -> Result<f64> {
        let chi = ChiSquared::new(self.dof).map_err(|e| Error::Degenerate(e.to_string()))?;
        Ok(1.0 - chi.cdf(x))
    }

    /// Critical value for the centered statistic `T_CQ`:
    /// `beta_scale * (q_{1-alpha} - dof)`.
    pub fn centered_critical_value(&self, alpha: f64) -> Result<f64> {
        Ok(self.beta_scale * (self.quantile(1.0 - alpha)? - self.dof))
    }

    /// Critical value for `||xbar1 - xbar2||^2`.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        Ok(self.beta_scale * self.quantile(1.0 - alpha)?)
    }
}

/// Moment-matched chi-square parameters from the differenced Gram cache.
///
/// `tr(Psi)` is estimated by `sum_k (2 / n_k) * mean_i ||X~_{k,i}||^2` and
/// `2 tr(Psi^2)` by the squared conditional standard deviation. `n1`, `n2` are
/// the original group sizes.
pub fn chi2_params_from_psi_hat(gram: &GramCache, n1: usize, n2: usize) -> Result<Chi2Params> {
    let (d1, d2) = gram.mean_self_products();
    let trace = 2.0 * d1 / n1 as f64 + 2.0 * d2 / n2 as f64;
    let sd = conditional_sd(gram);
    Chi2Params::from_moments(trace, sd * sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chi2Variant {
    /// Calibrate `T_CQ` against `beta * (chi2(dof) - dof)`.
    Tcq,
    /// Calibrate `||xbar1 - xbar2||^2` against `beta * chi2(dof)`.
    Norm,
}

pub fn chi2_test(x1: &DataMatrix, x2: &DataMatrix, alpha: f64, variant: Chi2Variant) -> Result<TestResult> {
    check_alpha(alpha)?;
    require_rows("chi-square test", 4, x1, x2)?;
    let params = chi2_params_from_psi_hat(&differenced_gram(x1, x2)?, x1.rows(), x2.rows())?;
    let (statistic, critical, p_value, method) = match variant {
        Chi2Variant::Tcq => {
            let t = t_cq_statistic(x1, x2)?;
            let p = params.survival(t / params.beta_scale + params.dof)?;
            (t, params.centered_critical_value(alpha)?, p, Method::Chi2Tcq)
        }
        Chi2Variant::Norm => {
            let (m1, m2) = (x1.column_means(), x2.column_means());
            let t: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum();
            let p = params.survival(t / params.beta_scale)?;
            (t, params.critical_value(alpha)?, p, Method::Chi2Norm)
        }
    };
    Ok(TestResult {
        statistic,
        p_value,
        reject: statistic > critical,
        alpha,
        method,
        b_resamples: 0,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomization::conditional_sd;
    use crate::result::p_value_from_draws;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = RngSeed::new(seed).rng(0);
        DataMatrix::new(n, p, (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn cq_zero_statistic_gives_half() {
        let norm = Normal::standard();
        assert_eq!(1.0 - norm.cdf(0.0), 0.5);
    }

    #[test]
    fn cq_degenerate_data_errors() {
        let c = DataMatrix::new(6, 3, vec![1.5; 18]).unwrap();
        assert!(matches!(cq_test(&c, &c, 0.05), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cq_p_value_consistent_with_decision() {
        let x1 = gaussian(10, 20, 1);
        let x2 = gaussian(12, 20, 2);
        let r = cq_test(&x1, &x2, 0.05).unwrap();
        assert_eq!(r.reject, r.p_value < 0.05);
        assert!(r.seed.is_none() && r.b_resamples == 0);
    }

    #[test]
    fn bootstrap_constant_data_p_one() {
        let c = DataMatrix::new(5, 2, vec![3.0; 10]).unwrap();
        let r = empirical_bootstrap_test(&c, &c, 50, 0.05, RngSeed::new(2)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = wild_bootstrap_test(&c, &c, 50, 0.05, RngSeed::new(2)).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn resampled_statistic_matches_explicit_resample() {
        let x1 = gaussian(6, 4, 3).centered();
        let x2 = gaussian(5, 4, 4).centered();
        let gram = GramCache::from_samples(&x1, &x2).unwrap();
        let idx1 = [0usize, 0, 3, 5, 5, 5];
        let idx2 = [4usize, 1, 1, 2, 0];
        let mut c1 = vec![0.0; 6];
        idx1.iter().for_each(|&i| c1[i] += 1.0);
        let mut c2 = vec![0.0; 5];
        idx2.iter().for_each(|&i| c2[i] += 1.0);
        let fast = resampled_statistic(&gram, &c1, &c2);
        let direct = t_cq_statistic(&x1.select_rows(&idx1), &x2.select_rows(&idx2)).unwrap();
        assert!((fast - direct).abs() < 1e-12 * direct.abs().max(1.0), "{fast} vs {direct}");
    }

    #[test]
    fn wild_all_plus_is_centered_statistic() {
        let x1 = gaussian(6, 4, 5).centered();
        let x2 = gaussian(7, 4, 6).centered();
        let gram = GramCache::from_samples(&x1, &x2).unwrap();
        let t = gram.weighted_statistic(&[1.0; 6], &[1.0; 7]);
        let direct = t_cq_statistic(&x1, &x2).unwrap();
        assert!((t - direct).abs() < 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn bootstrap_two_draw_count() {
        assert!((p_value_from_draws(&[5.0, -5.0], 0.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstraps_are_deterministic() {
        let x1 = gaussian(8, 10, 7);
        let x2 = gaussian(9, 10, 8);
        let s = RngSeed::with_stream(11, 2);
        assert_eq!(empirical_bootstrap_test(&x1, &x2, 100, 0.05, s), empirical_bootstrap_test(&x1, &x2, 100, 0.05, s));
        assert_eq!(wild_bootstrap_test(&x1, &x2, 100, 0.05, s), wild_bootstrap_test(&x1, &x2, 100, 0.05, s));
    }

    #[test]
    fn chi2_moment_identities() {
        // variance = 2 mean^2: one degree of freedom
        let p = Chi2Params::from_moments(3.0, 18.0).unwrap();
        assert!((p.dof - 1.0).abs() < 1e-12);
        // Psi = c I_p: tr = c p, 2 tr(Psi^2) = 2 c^2 p
        let (c, dim) = (0.7, 40.0);
        let p = Chi2Params::from_moments(c * dim, 2.0 * c * c * dim).unwrap();
        assert!((p.dof - dim).abs() < 1e-9);
        assert!((p.beta_scale - c).abs() < 1e-12);
        assert!(Chi2Params::from_moments(0.0, 1.0).is_err());
        assert!(Chi2Params::from_moments(1.0, 0.0).is_err());
    }

    #[test]
    fn chi2_critical_value_normal_limit() {
        let dof = 1e6;
        let beta = 0.3;
        let p = Chi2Params { beta_scale: beta, dof };
        let sigma = (2.0 * beta * beta * dof).sqrt();
        let z = Normal::standard().inverse_cdf(0.95);
        let crit = p.centered_critical_value(0.05).unwrap();
        assert!((crit / (sigma * z) - 1.0).abs() < 0.01, "{crit} vs {}", sigma * z);
    }

    #[test]
    fn chi2_params_use_differenced_gram() {
        let x1 = gaussian(20, 30, 9);
        let x2 = gaussian(30, 30, 10);
        let gram = differenced_gram(&x1, &x2).unwrap();
        let params = chi2_params_from_psi_hat(&gram, 20, 30).unwrap();
        let sd = conditional_sd(&gram);
        assert!((2.0 * params.beta_scale * params.beta_scale * params.dof - sd * sd).abs() < 1e-9 * sd * sd);
        for v in [Chi2Variant::Tcq, Chi2Variant::Norm] {
            let r = chi2_test(&x1, &x2, 0.05, v).unwrap();
            assert!((0.0..=1.0).contains(&r.p_value));
            assert_eq!(r.reject, r.p_value < 0.05);
        }
    }
}
