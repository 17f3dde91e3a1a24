use approx::assert_relative_eq;
use hdbf::competitors::{chi2_test, cq_test, empirical_bootstrap_test, wild_bootstrap_test, Chi2Variant};
use hdbf::empirical::moments;
use hdbf::randomization::{conditional_sd, differenced_gram, randomization_draws, randomization_test, randomized_statistic, SignVector};
use hdbf::simulation::{calibrate_shift, signal_to_noise, standardized_null_draws, Model, ModelSpec};
use hdbf::stats::{t_bs_statistic, t_cq_statistic, GramCache};
use hdbf::theory::sigma_oracle;
use hdbf::{DataMatrix, RngSeed};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DataMatrix {
    let mut rng = RngSeed::new(seed).rng(0);
    DataMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = RngSeed::new(seed).rng(1);
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample(StandardNormal));
    a.qr().q()
}

fn rotate(x: &DataMatrix, q: &DMatrix<f64>) -> DataMatrix {
    let m = DMatrix::from_row_slice(x.rows(), x.cols(), x.values()) * q;
    let mut v = Vec::with_capacity(x.rows() * x.cols());
    for i in 0..x.rows() {
        v.extend(m.row(i).iter());
    }
    DataMatrix::new(x.rows(), x.cols(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn statistics_are_shift_invariant(seed in any::<u64>(), n1 in 4usize..9, n2 in 4usize..9, p in 1usize..7, c in -50.0f64..50.0) {
        let x1 = gaussian(n1, p, seed);
        let x2 = gaussian(n2, p, seed ^ 1);
        let shift = vec![c; p];
        let (y1, y2) = (x1.shifted(&shift).unwrap(), x2.shifted(&shift).unwrap());
        let scale = 1.0 + c * c * p as f64;
        prop_assert!((t_cq_statistic(&x1, &x2).unwrap() - t_cq_statistic(&y1, &y2).unwrap()).abs() < 1e-9 * scale);
        prop_assert!((t_bs_statistic(&x1, &x2).unwrap() - t_bs_statistic(&y1, &y2).unwrap()).abs() < 1e-9 * scale);
        let (g, h) = (differenced_gram(&x1, &x2).unwrap(), differenced_gram(&y1, &y2).unwrap());
        prop_assert!((conditional_sd(&g) - conditional_sd(&h)).abs() < 1e-9 * scale);
    }

    #[test]
    fn statistics_are_rotation_invariant(seed in any::<u64>(), n1 in 4usize..9, n2 in 4usize..9, p in 2usize..8) {
        let x1 = gaussian(n1, p, seed);
        let x2 = gaussian(n2, p, seed ^ 1).shifted(&vec![0.5; p]).unwrap();
        let q = orthogonal(p, seed);
        let (y1, y2) = (rotate(&x1, &q), rotate(&x2, &q));
        assert_relative_eq!(t_cq_statistic(&x1, &x2).unwrap(), t_cq_statistic(&y1, &y2).unwrap(), epsilon = 1e-9, max_relative = 1e-9);
        let (g, h) = (differenced_gram(&x1, &x2).unwrap(), differenced_gram(&y1, &y2).unwrap());
        let s = RngSeed::new(seed);
        for (a, b) in randomization_draws(&g, 20, s).into_iter().zip(randomization_draws(&h, 20, s)) {
            assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn sign_flip_is_symmetric(seed in any::<u64>(), m1 in 2usize..6, m2 in 2usize..6, p in 1usize..5) {
        let g = GramCache::from_samples(&gaussian(m1, p, seed), &gaussian(m2, p, seed ^ 7)).unwrap();
        let e = SignVector::random(m1, m2, &RngSeed::new(seed), 0);
        prop_assert_eq!(randomized_statistic(&g, &e).unwrap(), randomized_statistic(&g, &e.negated()).unwrap());
    }

    #[test]
    fn p_values_lie_on_the_resampling_grid(seed in any::<u64>(), b in 1usize..60) {
        let (x1, x2) = (gaussian(6, 3, seed), gaussian(7, 3, seed ^ 3));
        for r in [
            randomization_test(&x1, &x2, b, 0.05, RngSeed::new(seed)).unwrap(),
            empirical_bootstrap_test(&x1, &x2, b, 0.05, RngSeed::new(seed)).unwrap(),
            wild_bootstrap_test(&x1, &x2, b, 0.05, RngSeed::new(seed)).unwrap(),
        ] {
            let k = r.p_value * (b + 1) as f64;
            prop_assert!((k - k.round()).abs() < 1e-9 && k >= 1.0 - 1e-9 && r.p_value <= 1.0);
            prop_assert_eq!(r.reject, r.p_value <= 0.05);
        }
    }
}

/// Exhaustive enumeration for m = 3 per group and several data sets.
#[test]
fn enumerated_conditional_moments() {
    for seed in 0..10 {
        let g = GramCache::from_samples(&gaussian(3, 4, seed), &gaussian(3, 4, seed + 100)).unwrap();
        let vals: Vec<f64> = (0u32..64)
            .map(|mask| {
                let s = |bit: u32| if mask >> bit & 1 == 1 { -1.0 } else { 1.0 };
                randomized_statistic(&g, &SignVector::new((0..3).map(s).collect(), (3..6).map(s).collect()).unwrap()).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / 64.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-12);
        assert_relative_eq!(var, conditional_sd(&g).powi(2), max_relative = 1e-10);
    }
}

#[test]
fn t_cq_is_unbiased_for_squared_mean_difference() {
    let m = ModelSpec::new(Model::II, 10, 14, 40).unwrap();
    let c = calibrate_shift(&m, 2.0).unwrap();
    let shifted = m.clone().with_uniform_shift(c).unwrap();
    let target = c * c * 40.0;
    assert_relative_eq!(signal_to_noise(&m, &vec![c; 40]).unwrap(), 2.0, max_relative = 1e-12);
    let sigma = sigma_oracle(&m.psi_spec().unwrap()).unwrap();
    let reps = 4000;
    let draws: Vec<f64> = (0..reps)
        .map(|r| {
            let (y1, y2) = shifted.generate(RngSeed::new(21).child(r));
            t_cq_statistic(&y1, &y2).unwrap()
        })
        .collect();
    let (mean, var, _) = moments(&draws);
    assert!((mean - target).abs() < 4.0 * (var / reps as f64).sqrt(), "mean={mean} target={target} sigma={sigma}");
}

#[test]
fn null_draws_are_standardized_for_every_model() {
    for model in [Model::I, Model::II, Model::III, Model::IV, Model::Gamma(0.3)] {
        let m = ModelSpec::new(model, 8, 12, 24).unwrap();
        let d = standardized_null_draws(&m, 4000, 5).unwrap();
        let (mean, var, _) = moments(&d);
        assert!(mean.abs() < 0.1, "{model}: mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "{model}: var {var}");
    }
}

#[test]
fn every_method_is_reproducible() {
    let (x1, x2) = (gaussian(9, 12, 1), gaussian(11, 12, 2));
    let s = RngSeed::new(4);
    assert_eq!(randomization_test(&x1, &x2, 99, 0.05, s), randomization_test(&x1, &x2, 99, 0.05, s));
    assert_eq!(empirical_bootstrap_test(&x1, &x2, 99, 0.05, s), empirical_bootstrap_test(&x1, &x2, 99, 0.05, s));
    assert_eq!(wild_bootstrap_test(&x1, &x2, 99, 0.05, s), wild_bootstrap_test(&x1, &x2, 99, 0.05, s));
    assert_eq!(cq_test(&x1, &x2, 0.05), cq_test(&x1, &x2, 0.05));
    assert_eq!(chi2_test(&x1, &x2, 0.05, Chi2Variant::Tcq), chi2_test(&x1, &x2, 0.05, Chi2Variant::Tcq));
}

#[test]
fn strong_signal_is_detected_by_all_methods() {
    let x1 = gaussian(12, 30, 8);
    let x2 = gaussian(14, 30, 9).shifted(&[2.0; 30]).unwrap();
    let s = RngSeed::new(1);
    assert!(randomization_test(&x1, &x2, 199, 0.05, s).unwrap().reject);
    assert!(empirical_bootstrap_test(&x1, &x2, 199, 0.05, s).unwrap().reject);
    assert!(wild_bootstrap_test(&x1, &x2, 199, 0.05, s).unwrap().reject);
    assert!(cq_test(&x1, &x2, 0.05).unwrap().reject);
    assert!(chi2_test(&x1, &x2, 0.05, Chi2Variant::Tcq).unwrap().reject);
    assert!(chi2_test(&x1, &x2, 0.05, Chi2Variant::Norm).unwrap().reject);
}
