//! Browser bindings for three interactive views: one randomization test with its
//! reference distribution, QQ pairs for the equicorrelated model, and the
//! predicted local power curve.
//!
//! The computations live in plain functions returning `hdbf::Result` so they can
//! be tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use hdbf::empirical::ks_two_sample;
use hdbf::randomization::{differenced_gram, randomization_draws, randomization_test};
use hdbf::simulation::{calibrate_shift, gamma_mixture_weights, qq_pairs, Model, ModelSpec, QqReference};
use hdbf::theory::GnEstimate;
use hdbf::{Error, RngSeed};
use wasm_bindgen::prelude::*;

/// Keeps a single call interactive in the browser.
const MAX_WORK: usize = 50_000_000;

fn check_work(what: &'static str, work: usize) -> hdbf::Result<()> {
    if work > MAX_WORK {
        return Err(Error::InvalidParameter {
            name: what,
            reason: format!("requested work {work} exceeds the demo limit {MAX_WORK}"),
        });
    }
    Ok(())
}

fn model_spec(model: &str, n1: usize, n2: usize, p: usize, beta: f64) -> hdbf::Result<ModelSpec> {
    let spec = ModelSpec::new(model.parse()?, n1, n2, p)?;
    if beta == 0.0 {
        return Ok(spec);
    }
    let c = calibrate_shift(&spec, beta)?;
    spec.with_uniform_shift(c)
}

#[wasm_bindgen]
pub struct RandomizationRun {
    statistic: f64,
    p_value: f64,
    reject: bool,
    draws: Vec<f64>,
}

#[wasm_bindgen]
impl RandomizationRun {
    #[wasm_bindgen(getter)]
    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    #[wasm_bindgen(getter, js_name = pValue)]
    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    #[wasm_bindgen(getter)]
    pub fn reject(&self) -> bool {
        self.reject
    }

    /// The sign-flipped statistics the p-value was computed from.
    #[wasm_bindgen(getter)]
    pub fn draws(&self) -> Vec<f64> {
        self.draws.clone()
    }
}

/// Draws one data set from `model` at signal-to-noise ratio `beta` and runs the
/// randomization test on it.
#[allow(clippy::too_many_arguments)]
pub fn run_randomization(model: &str, n1: usize, n2: usize, p: usize, beta: f64, b: usize, alpha: f64, seed: u64) -> hdbf::Result<RandomizationRun> {
    let n_sq = (n1 + n2).saturating_mul(n1 + n2);
    check_work("p", n_sq.saturating_mul(p.saturating_add(b)))?;
    let spec = model_spec(model, n1, n2, p, beta)?;
    let root = RngSeed::new(seed);
    let (x1, x2) = spec.generate(root.child(0));
    let signs = root.child(1);
    let result = randomization_test(&x1, &x2, b, alpha, signs)?;
    let draws = randomization_draws(&differenced_gram(&x1, &x2)?, b, signs);
    Ok(RandomizationRun {
        statistic: result.statistic,
        p_value: result.p_value,
        reject: result.reject,
        draws,
    })
}

/// Flattened `(empirical, reference)` quantile pairs of `T_CQ / sigma` in the
/// equicorrelated model against its chi-square mixture limit, followed by the
/// two-sample KS distance as the last element.
pub fn gamma_qq_pairs(gamma: f64, n1: usize, n2: usize, p: usize, reps: usize, seed: u64) -> hdbf::Result<Vec<f64>> {
    check_work("reps", reps.saturating_mul((n1 + n2).saturating_mul(n1 + n2)).saturating_mul(p))?;
    let spec = ModelSpec::new(Model::Gamma(gamma), n1, n2, p)?;
    let reference = QqReference::Mixture(gamma_mixture_weights(gamma, p)?);
    let pairs = qq_pairs(&spec, &reference, reps, seed, 20_000)?;
    let (emp, refq): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let mut out: Vec<f64> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
    out.push(ks_two_sample(&emp, &refq));
    Ok(out)
}

/// Flattened `(beta, power)` pairs of the predicted local power of the
/// randomization test on `points` equally spaced `beta` in `[0, beta_max]`.
#[allow(clippy::too_many_arguments)]
pub fn predicted_power_curve(model: &str, n1: usize, n2: usize, p: usize, alpha: f64, beta_max: f64, points: usize, seed: u64) -> hdbf::Result<Vec<f64>> {
    if points < 2 || beta_max.is_nan() || beta_max <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "need at least two points and a positive beta_max".into(),
        });
    }
    let psi = ModelSpec::new(model.parse()?, n1, n2, p)?.psi_spec()?;
    let scale = (2.0 * psi.trace_psi_sq()?).sqrt();
    let gn = GnEstimate::new(&psi.psi_eigenvalues()?, 100_000, RngSeed::new(seed))?;
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let beta = beta_max * i as f64 / (points - 1) as f64;
        out.push(beta);
        out.push(gn.power(alpha, beta * scale)?);
    }
    Ok(out)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = randomizationTest)]
#[allow(clippy::too_many_arguments)]
pub fn randomization_test_js(model: &str, n1: usize, n2: usize, p: usize, beta: f64, b: usize, alpha: f64, seed: u32) -> Result<RandomizationRun, JsError> {
    run_randomization(model, n1, n2, p, beta, b, alpha, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = gammaQq)]
pub fn gamma_qq_js(gamma: f64, n1: usize, n2: usize, p: usize, reps: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    gamma_qq_pairs(gamma, n1, n2, p, reps, seed.into()).map_err(js)
}

#[wasm_bindgen(js_name = powerCurve)]
#[allow(clippy::too_many_arguments)]
pub fn power_curve_js(model: &str, n1: usize, n2: usize, p: usize, alpha: f64, beta_max: f64, points: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    predicted_power_curve(model, n1, n2, p, alpha, beta_max, points, seed.into()).map_err(js)
}
