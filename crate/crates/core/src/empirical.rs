//! Small empirical-distribution helpers shared by the tests, the oracles and the harness.

use statrs::distribution::{ContinuousCDF, Normal};

/// Quantile under the min-attainment convention `min{x : F(x) >= q}` for the
/// empirical CDF of `sorted` (ascending, non-empty).
pub fn quantile_min(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    // Guard against `q * n` landing a hair above an integer.
    let k = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

/// Empirical CDF `#{v <= x} / n` of an ascending slice.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Sample mean, variance (n - 1 denominator) and skewness (moment ratio).
pub fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for x in v {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let var = m2 / (n - 1.0);
    let skew = (m3 / n) / (m2 / n).powf(1.5);
    (mean, var, skew)
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let a = sorted(a.to_vec());
    let b = sorted(b.to_vec());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample KS distance of `sample` against the standard normal CDF.
pub fn ks_standard_normal(sample: &[f64]) -> f64 {
    let s = sorted(sample.to_vec());
    let n = s.len() as f64;
    let norm = Normal::standard();
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = norm.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Binomial standard error `sqrt(p (1 - p) / r)`.
pub fn binomial_se(p: f64, r: usize) -> f64 {
    if r == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / r as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_convention() {
        assert_eq!(quantile_min(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile_min(&[7.0], 0.01), 7.0);
        assert_eq!(quantile_min(&[7.0], 0.99), 7.0);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_min(&v, 0.7), 7.0);
        assert_eq!(quantile_min(&v, 0.71), 8.0);
        assert_eq!(ecdf(&v, 7.0), 0.7);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0], &[1.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moments_of_small_sample() {
        let (m, v, s) = moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert!(s.abs() < 1e-15);
    }
}
