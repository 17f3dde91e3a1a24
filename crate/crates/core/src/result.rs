use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::rng::RngSeed;

/// Test procedures implemented by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Randomization test on the differenced sample.
    New,
    /// Normal approximation of the standardized Chen–Qin statistic.
    Cq,
    /// Empirical bootstrap of the Chen–Qin statistic.
    Eb,
    /// Wild (Rademacher) bootstrap of the Chen–Qin statistic.
    Wb,
    /// Moment-matched chi-square calibration of the Chen–Qin statistic.
    Chi2Tcq,
    /// Moment-matched chi-square calibration of the squared mean difference.
    Chi2Norm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::New,
        Method::Cq,
        Method::Eb,
        Method::Wb,
        Method::Chi2Tcq,
        Method::Chi2Norm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::New => "NEW",
            Method::Cq => "CQ",
            Method::Eb => "EB",
            Method::Wb => "WB",
            Method::Chi2Tcq => "CHI2_TCQ",
            Method::Chi2Norm => "CHI2_NORM",
        }
    }

    pub fn is_resampling(self) -> bool {
        matches!(self, Method::New | Method::Eb | Method::Wb)
    }

    /// Stable per-method stream tag so a method's draws do not depend on which
    /// other methods run alongside it.
    pub fn stream_tag(self) -> u64 {
        match self {
            Method::New => 101,
            Method::Cq => 102,
            Method::Eb => 103,
            Method::Wb => 104,
            Method::Chi2Tcq => 105,
            Method::Chi2Norm => 106,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == up)
            .ok_or_else(|| Error::param("method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub method: Method,
    /// 0 for methods that do not resample.
    pub b_resamples: usize,
    pub seed: Option<RngSeed>,
}

impl TestResult {
    pub(crate) fn resampled(method: Method, statistic: f64, exceed: usize, b: usize, alpha: f64, seed: RngSeed) -> Self {
        let p_value = resampling_p_value(exceed, b);
        Self {
            statistic,
            p_value,
            reject: p_value <= alpha,
            alpha,
            method,
            b_resamples: b,
            seed: Some(seed),
        }
    }
}

impl fmt::Display for TestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "method={} statistic={:.6e} p={:.6} reject={}",
            self.method, self.statistic, self.p_value, self.reject
        )
    }
}

/// `(1 + #exceedances) / (B + 1)`.
pub fn resampling_p_value(exceed: usize, b: usize) -> f64 {
    (1 + exceed) as f64 / (b + 1) as f64
}

/// p-value from explicit resampled values, counting ties as exceedances.
pub fn p_value_from_draws(draws: &[f64], observed: f64) -> f64 {
    resampling_p_value(draws.iter().filter(|&&t| t >= observed).count(), draws.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_conventions() {
        assert_eq!(p_value_from_draws(&[1.0, 2.0, 3.0], 10.0), 0.25);
        assert_eq!(p_value_from_draws(&[1.0, 2.0, 3.0], 1.0), 1.0);
        assert_eq!(p_value_from_draws(&[2.0, -1.0, 5.0], 2.0), 0.75);
        assert!((p_value_from_draws(&[5.0, -5.0], 0.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert_eq!("chi2_tcq".parse::<Method>().unwrap(), Method::Chi2Tcq);
        assert!("LOU".parse::<Method>().is_err());
    }
}
