//! The randomization test: Rademacher sign flips of the differenced sample.
//!
//! Differencing consecutive observations removes the group means, and the
//! half-differences are symmetric about zero, so flipping their signs leaves
//! their joint law unchanged. The conditional law of the sign-flipped
//! statistic given the data calibrates `T_CQ` of the original observations.

use crate::data::DataMatrix;
use crate::empirical::{quantile_min, sorted};
use crate::error::{check_alpha, check_resamples, Error, Result};
use crate::parallel::{count_indices, map_indices};
use crate::result::{Method, TestResult};
use crate::rng::{fill_signs, RngSeed};
use crate::stats::{build_gram, difference_transform, t_cq_statistic, GramCache};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SignVector {
    e1: Vec<f64>,
    e2: Vec<f64>,
}

impl SignVector {
    pub fn new(e1: Vec<f64>, e2: Vec<f64>) -> Result<Self> {
        if e1.iter().chain(&e2).any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::param("signs", "entries must be +1 or -1"));
        }
        Ok(Self { e1, e2 })
    }

    pub fn ones(m1: usize, m2: usize) -> Self {
        Self {
            e1: vec![1.0; m1],
            e2: vec![1.0; m2],
        }
    }

    /// Uniform random signs from draw `index` of `seed`.
    pub fn random(m1: usize, m2: usize, seed: &RngSeed, index: u64) -> Self {
        let mut rng = seed.rng(index);
        let mut e1 = vec![0.0; m1];
        let mut e2 = vec![0.0; m2];
        fill_signs(&mut rng, &mut e1);
        fill_signs(&mut rng, &mut e2);
        Self { e1, e2 }
    }

    pub fn e1(&self) -> &[f64] {
        &self.e1
    }

    pub fn e2(&self) -> &[f64] {
        &self.e2
    }

    pub fn negated(&self) -> Self {
        Self {
            e1: self.e1.iter().map(|s| -s).collect(),
            e2: self.e2.iter().map(|s| -s).collect(),
        }
    }
}

/// The sign-flipped Chen–Qin statistic over cached inner products.
pub fn randomized_statistic(gram: &GramCache, e: &SignVector) -> Result<f64> {
    if e.e1.len() != gram.m1() || e.e2.len() != gram.m2() {
        return Err(Error::SignLengthMismatch(e.e1.len(), e.e2.len(), gram.m1(), gram.m2()));
    }
    Ok(gram.weighted_statistic(&e.e1, &e.e2))
}

/// Exact standard deviation of [`randomized_statistic`] over uniform sign vectors,
/// conditional on the data.
pub fn conditional_sd(gram: &GramCache) -> f64 {
    let within = |m: usize, g: &dyn Fn(usize, usize) -> f64| {
        let mut s = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                let v = g(i, j);
                s += v * v;
            }
        }
        let mf = m as f64;
        4.0 * s / (mf * mf * (mf - 1.0) * (mf - 1.0))
    };
    let (m1, m2) = (gram.m1(), gram.m2());
    let mut cross = 0.0;
    for i in 0..m1 {
        for j in 0..m2 {
            let v = gram.g12(i, j);
            cross += v * v;
        }
    }
    let (a, b) = (m1 as f64, m2 as f64);
    let var = within(m1, &|i, j| gram.g11(i, j)) + within(m2, &|i, j| gram.g22(i, j)) + 4.0 * cross / (a * a * b * b);
    var.sqrt()
}

/// `b` draws of the randomized statistic, draw `i` using stream index `i`.
pub fn randomization_draws(gram: &GramCache, b: usize, seed: RngSeed) -> Vec<f64> {
    map_indices(b, |i| {
        let e = SignVector::random(gram.m1(), gram.m2(), &seed, i as u64);
        gram.weighted_statistic(&e.e1, &e.e2)
    })
}

/// Empirical `q`-quantile (min-attainment convention) of `b` randomized draws.
pub fn randomization_quantile(gram: &GramCache, b: usize, q: f64, seed: RngSeed) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("{q} is not in (0, 1)")));
    }
    check_resamples(b)?;
    Ok(quantile_min(&sorted(randomization_draws(gram, b, seed)), q))
}

/// Gram cache of the differenced samples of two groups.
pub fn differenced_gram(x1: &DataMatrix, x2: &DataMatrix) -> Result<GramCache> {
    build_gram(&difference_transform(x1)?, &difference_transform(x2)?)
}

/// Randomization test of equal means.
///
/// The observed statistic is `T_CQ` of the raw observations; the reference
/// values are `b` sign-flipped statistics of the differenced samples. The
/// p-value is `(1 + #{T_i >= T_obs}) / (b + 1)` and the test rejects when it is
/// at most `alpha`.
pub fn randomization_test(x1: &DataMatrix, x2: &DataMatrix, b: usize, alpha: f64, seed: RngSeed) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_resamples(b)?;
    let got = x1.rows().min(x2.rows());
    if got < 4 {
        return Err(Error::TooFewObservations {
            what: "randomization test",
            need: 4,
            got,
        });
    }
    let observed = t_cq_statistic(x1, x2)?;
    let gram = differenced_gram(x1, x2)?;
    let exceed = count_indices(b, |i| {
        let e = SignVector::random(gram.m1(), gram.m2(), &seed, i as u64);
        gram.weighted_statistic(&e.e1, &e.e2) >= observed
    });
    Ok(TestResult::resampled(Method::New, observed, exceed, b, alpha, seed))
}
