//! Monte-Carlo harness: data-generating models, signal calibration, and
//! size / power / ROC / QQ experiments.
//!
//! Every replication `r` draws from `seed.child(r)`: data from its sub-stream
//! 0 and each method from its own fixed sub-stream. Tallies are merged by
//! integer addition, so reports do not depend on thread scheduling or on which
//! other methods run in the same experiment.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::competitors::{chi2_test, cq_test, empirical_bootstrap_test, wild_bootstrap_test, Chi2Variant};
use crate::data::DataMatrix;
use crate::empirical::{binomial_se, quantile_min, sorted};
use crate::error::{check_alpha, check_resamples, Error, Result};
use crate::parallel::map_indices;
use crate::randomization::randomization_test;
use crate::result::{Method, TestResult};
use crate::rng::{uniform_index, RngSeed};
use crate::stats::t_cq_statistic;
use crate::theory::{mixture_limit_sample, reference_qf_sample, sigma_oracle, Covariance, CovarianceBlock, MixtureWeights, PsiSpec};

pub const DEFAULT_REPS: usize = 2000;
pub const DEFAULT_SIM_RESAMPLES: usize = 300;

const MODEL_IV_BASE: f64 = 1.01;
const MODEL_IV_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// `N(0, I_p)`
    I,
    /// `N(0, V_k Lambda V_k^T + I_p)` with rank-two, group-specific `V_k`.
    II,
    /// Skewed standardized chi-square coordinates with observation-specific diagonal scales.
    III,
    /// Moving sums of six standardized chi-square latents with growing scales.
    IV,
    /// `N(0, gamma 1 1^T + (1 - gamma) I_p)`
    Gamma(f64),
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::I => f.write_str("I"),
            Model::II => f.write_str("II"),
            Model::III => f.write_str("III"),
            Model::IV => f.write_str("IV"),
            Model::Gamma(g) => write!(f, "gamma:{g}"),
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some(g) = t.strip_prefix("gamma:") {
            let g: f64 = g
                .parse()
                .map_err(|_| Error::param("model", format!("bad gamma value in `{s}`")))?;
            return Ok(Model::Gamma(g));
        }
        match t.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            "IV" | "4" => Ok(Model::IV),
            _ => Err(Error::param("model", format!("unknown model `{s}`"))),
        }
    }
}

/// A data-generating model with group sizes, dimension and mean shift
/// `mu2 - mu1` (`mu1 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    model: Model,
    n1: usize,
    n2: usize,
    p: usize,
    shift: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn new(model: Model, n1: usize, n2: usize, p: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || p == 0 {
            return Err(Error::param("model", "group sizes and dimension must be positive"));
        }
        match model {
            Model::II if !p.is_multiple_of(4) => {
                return Err(Error::param("p", format!("Model II needs p divisible by 4, got {p}")));
            }
            Model::Gamma(g) if !(0.0..=1.0).contains(&g) => {
                return Err(Error::param("gamma", format!("{g} is not in [0, 1]")));
            }
            _ => {}
        }
        Ok(Self { model, n1, n2, p, shift: None })
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != self.p {
            return Err(Error::DimensionMismatch(self.p, shift.len()));
        }
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("shift", "entries must be finite"));
        }
        self.shift = Some(shift);
        Ok(self)
    }

    /// `mu2 = c * 1_p`.
    pub fn with_uniform_shift(self, c: f64) -> Result<Self> {
        let p = self.p;
        self.with_shift(vec![c; p])
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    pub fn is_null(&self) -> bool {
        self.shift.as_ref().is_none_or(|s| s.iter().all(|&v| v == 0.0))
    }

    /// Rows of the two factor loadings `(v1, v2)` of Model II for group `k` (1 or 2).
    fn model_ii_factors(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let q = self.p / 4;
        let signs: [[f64; 4]; 2] = if k == 1 {
            [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0]]
        } else {
            [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]]
        };
        let col = |c: usize| (0..self.p).map(|j| signs[c][j / q]).collect::<Vec<_>>();
        (col(0), col(1))
    }

    fn model_iv_weights(&self) -> Vec<f64> {
        // w_t = 1.01^{t-1} for t = 1..=p+5
        (0..self.p + MODEL_IV_WINDOW - 1).map(|t| MODEL_IV_BASE.powi(t as i32)).collect()
    }

    /// Number of group-`k` observations drawn with the increasing diagonal scale in Model III.
    fn model_iii_first_half(n: usize) -> usize {
        n.div_ceil(2)
    }

    /// Population covariance description for this model.
    pub fn psi_spec(&self) -> Result<PsiSpec> {
        let p = self.p;
        match self.model {
            Model::I => PsiSpec::homogeneous(self.n1, self.n2, Covariance::identity(p), Covariance::identity(p)),
            Model::II => {
                let cov = |k| {
                    let (v1, v2) = self.model_ii_factors(k);
                    Covariance::LowRankPlusIdentity { p, factors: vec![(1.0, v1), (0.5, v2)] }
                };
                PsiSpec::homogeneous(self.n1, self.n2, cov(1), cov(2))
            }
            Model::III => {
                let blocks = |k: usize, n: usize| {
                    let kf = k as f64;
                    let up = Covariance::Diagonal((1..=p).map(|j| kf * j as f64).collect());
                    let down = Covariance::Diagonal((1..=p).rev().map(|j| kf * j as f64).collect());
                    let first = Self::model_iii_first_half(n);
                    let mut b = vec![CovarianceBlock { cov: up, count: first }];
                    if n > first {
                        b.push(CovarianceBlock { cov: down, count: n - first });
                    }
                    b
                };
                PsiSpec::with_blocks(self.n1, self.n2, blocks(1, self.n1), blocks(2, self.n2))
            }
            Model::IV => {
                let w2: Vec<f64> = self.model_iv_weights().iter().map(|w| w * w).collect();
                let m = DMatrix::from_fn(p, p, |i, j| {
                    let (lo, hi) = (i.max(j), i.min(j) + MODEL_IV_WINDOW - 1);
                    if lo > hi {
                        0.0
                    } else {
                        w2[lo..=hi].iter().sum()
                    }
                });
                let cov = Covariance::Dense(m);
                PsiSpec::homogeneous(self.n1, self.n2, cov.clone(), cov)
            }
            Model::Gamma(gamma) => {
                let cov = Covariance::Equicorrelated { p, gamma };
                PsiSpec::homogeneous(self.n1, self.n2, cov.clone(), cov)
            }
        }
    }

    fn generate_group(&self, k: usize, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let p = self.p;
        let mut out = Vec::with_capacity(n * p);
        let normal = |rng: &mut _| -> f64 { StandardNormal.sample(rng) };
        match self.model {
            Model::I => {
                for _ in 0..n * p {
                    out.push(normal(rng));
                }
            }
            Model::II => {
                let (v1, v2) = self.model_ii_factors(k);
                let half = 0.5f64.sqrt();
                for _ in 0..n {
                    let (z0, z1) = (normal(rng), normal(rng) * half);
                    for j in 0..p {
                        out.push(z0 * v1[j] + z1 * v2[j] + normal(rng));
                    }
                }
            }
            Model::III => {
                let first = Self::model_iii_first_half(n);
                let kf = k as f64;
                for i in 0..n {
                    for j in 0..p {
                        let scale = if i < first { (j + 1) as f64 } else { (p - j) as f64 };
                        out.push((kf * scale).sqrt() * standardized_chi2(rng));
                    }
                }
            }
            Model::IV => {
                let w = self.model_iv_weights();
                let mut u = vec![0.0; w.len()];
                for _ in 0..n {
                    for (ut, wt) in u.iter_mut().zip(&w) {
                        *ut = wt * standardized_chi2(rng);
                    }
                    for j in 0..p {
                        out.push(u[j..j + MODEL_IV_WINDOW].iter().sum());
                    }
                }
            }
            Model::Gamma(gamma) => {
                let (a, b) = (gamma.sqrt(), (1.0 - gamma).sqrt());
                for _ in 0..n {
                    let common = a * normal(rng);
                    for _ in 0..p {
                        out.push(common + b * normal(rng));
                    }
                }
            }
        }
        out
    }

    /// Draws one data set: group 1 has mean zero, group 2 mean `shift`.
    pub fn generate(&self, seed: RngSeed) -> (DataMatrix, DataMatrix) {
        let mut r1 = seed.rng(1);
        let mut r2 = seed.rng(2);
        let y1 = self.generate_group(1, self.n1, &mut r1);
        let mut y2 = self.generate_group(2, self.n2, &mut r2);
        if let Some(shift) = &self.shift {
            for row in y2.chunks_exact_mut(self.p) {
                for (v, s) in row.iter_mut().zip(shift) {
                    *v += s;
                }
            }
        }
        (
            DataMatrix::from_raw(self.n1, self.p, y1),
            DataMatrix::from_raw(self.n2, self.p, y2),
        )
    }
}

/// `(chi2_1 - 1) / sqrt(2)`.
pub fn standardized_chi2(rng: &mut impl Rng) -> f64 {
    let g: f64 = StandardNormal.sample(rng);
    (g * g - 1.0) * std::f64::consts::FRAC_1_SQRT_2
}

/// The `c` for which `mu2 = c 1_p` reaches signal-to-noise ratio
/// `beta = ||mu1 - mu2||^2 / sqrt(2 tr(Psi^2))`.
pub fn calibrate_shift(model: &ModelSpec, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("{beta} must be finite and nonnegative")));
    }
    let tr2 = model.psi_spec()?.trace_psi_sq()?;
    Ok((beta * (2.0 * tr2).sqrt() / model.p() as f64).sqrt())
}

/// Signal-to-noise ratio of an explicit shift.
pub fn signal_to_noise(model: &ModelSpec, shift: &[f64]) -> Result<f64> {
    let tr2 = model.psi_spec()?.trace_psi_sq()?;
    Ok(shift.iter().map(|v| v * v).sum::<f64>() / (2.0 * tr2).sqrt())
}

/// Runs one test procedure. `b` and `seed` are ignored by deterministic methods.
pub fn run_method(method: Method, x1: &DataMatrix, x2: &DataMatrix, b: usize, alpha: f64, seed: RngSeed) -> Result<TestResult> {
    match method {
        Method::New => randomization_test(x1, x2, b, alpha, seed),
        Method::Cq => cq_test(x1, x2, alpha),
        Method::Eb => empirical_bootstrap_test(x1, x2, b, alpha, seed),
        Method::Wb => wild_bootstrap_test(x1, x2, b, alpha, seed),
        Method::Chi2Tcq => chi2_test(x1, x2, alpha, Chi2Variant::Tcq),
        Method::Chi2Norm => chi2_test(x1, x2, alpha, Chi2Variant::Norm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodTally {
    pub method: Method,
    pub rejections: usize,
    /// Replications where the method could not be evaluated (e.g. degenerate data).
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Model label, or `resampled` for the real-data procedure.
    pub model: String,
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    pub beta: f64,
    pub reps: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tallies: Vec<MethodTally>,
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn tally(&self, method: Method) -> Option<&MethodTally> {
        self.tallies.iter().find(|t| t.method == method)
    }

    /// Rejection frequency among replications where the method ran.
    pub fn rate(&self, method: Method) -> Option<f64> {
        self.tally(method).map(|t| {
            let valid = self.reps - t.errors;
            if valid == 0 {
                0.0
            } else {
                t.rejections as f64 / valid as f64
            }
        })
    }

    pub fn se(&self, method: Method) -> Option<f64> {
        let t = self.tally(method)?;
        Some(binomial_se(self.rate(method)?, self.reps - t.errors))
    }
}

/// Per-replication outcome of each method: `Some(reject)` or `None` on error.
fn tally(methods: &[Method], outcomes: &[Vec<Option<bool>>]) -> Vec<MethodTally> {
    methods
        .iter()
        .enumerate()
        .map(|(m, &method)| MethodTally {
            method,
            rejections: outcomes.iter().filter(|o| o[m] == Some(true)).count(),
            errors: outcomes.iter().filter(|o| o[m].is_none()).count(),
        })
        .collect()
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::param("methods", "at least one method is required"));
    }
    Ok(())
}

fn run_replications<G>(methods: &[Method], reps: usize, b: usize, alpha: f64, seed: RngSeed, data: G) -> Vec<Vec<Option<bool>>>
where
    G: Fn(RngSeed) -> (DataMatrix, DataMatrix) + Sync + Send,
{
    map_indices(reps, |r| {
        let rep = seed.child(r as u64);
        let (x1, x2) = data(rep.child(0));
        methods
            .iter()
            .map(|&m| run_method(m, &x1, &x2, b, alpha, rep.child(m.stream_tag())).ok().map(|t| t.reject))
            .collect()
    })
}

fn experiment(model: &ModelSpec, beta: f64, methods: &[Method], reps: usize, b: usize, alpha: f64, seed: u64) -> Result<ExperimentReport> {
    check_methods(methods)?;
    check_alpha(alpha)?;
    check_resamples(b)?;
    let start = Instant::now();
    let root = RngSeed::new(seed);
    let outcomes = run_replications(methods, reps, b, alpha, root, |s| model.generate(s));
    Ok(ExperimentReport {
        model: model.model().to_string(),
        n1: model.n1(),
        n2: model.n2(),
        p: model.p(),
        beta,
        reps,
        b,
        alpha,
        seed,
        tallies: tally(methods, &outcomes),
        elapsed: start.elapsed(),
    })
}

/// Empirical size of each method over `reps` null replications.
pub fn run_size_experiment(model: &ModelSpec, methods: &[Method], reps: usize, b: usize, alpha: f64, seed: u64) -> Result<ExperimentReport> {
    if !model.is_null() {
        return Err(Error::param("shift", "size experiments require a zero mean shift"));
    }
    experiment(model, 0.0, methods, reps, b, alpha, seed)
}

/// Empirical power at signal-to-noise ratio `beta` with `mu2 = c 1_p`.
pub fn run_power_experiment(model: &ModelSpec, beta: f64, methods: &[Method], reps: usize, b: usize, alpha: f64, seed: u64) -> Result<ExperimentReport> {
    let c = calibrate_shift(model, beta)?;
    let shifted = model.clone().with_uniform_shift(c)?;
    experiment(&shifted, beta, methods, reps, b, alpha, seed)
}

/// `(alpha, power)` for each grid level from one set of per-replication p-values.
pub fn roc_curve(model: &ModelSpec, beta: f64, method: Method, reps: usize, b: usize, seed: u64, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    for &a in grid {
        check_alpha(a)?;
    }
    check_resamples(b)?;
    let c = calibrate_shift(model, beta)?;
    let shifted = model.clone().with_uniform_shift(c)?;
    let root = RngSeed::new(seed);
    let p_values = map_indices(reps, |r| {
        let rep = root.child(r as u64);
        let (x1, x2) = shifted.generate(rep.child(0));
        run_method(method, &x1, &x2, b, 0.5, rep.child(method.stream_tag())).map(|t| t.p_value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(power_on_grid(&p_values, grid))
}

/// Fraction of p-values at or below each level.
pub fn power_on_grid(p_values: &[f64], grid: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(p_values.to_vec());
    let n = s.len().max(1) as f64;
    grid.iter().map(|&a| (a, s.partition_point(|&p| p <= a) as f64 / n)).collect()
}

/// `reps` null draws of `T_CQ(Y1, Y2) / sigma` with `sigma` the exact null standard deviation.
pub fn standardized_null_draws(model: &ModelSpec, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let null = ModelSpec { shift: None, ..model.clone() };
    let sigma = sigma_oracle(&null.psi_spec()?)?;
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("null standard deviation is zero".into()));
    }
    let root = RngSeed::new(seed);
    map_indices(reps, |r| {
        let (y1, y2) = null.generate(root.child(r as u64).child(0));
        t_cq_statistic(&y1, &y2).map(|t| t / sigma)
    })
    .into_iter()
    .collect()
}

/// Reference distribution for QQ comparisons.
#[derive(Debug, Clone, PartialEq)]
pub enum QqReference {
    /// Standardized Gaussian quadratic form with the model's `Psi` eigenvalues.
    QuadraticForm,
    /// Normal / centered chi-square mixture.
    Mixture(MixtureWeights),
}

/// Draws from the reference distribution of a model.
pub fn reference_draws(model: &ModelSpec, reference: &QqReference, n_ref: usize, seed: RngSeed) -> Result<Vec<f64>> {
    match reference {
        QqReference::QuadraticForm => reference_qf_sample(&model.psi_spec()?.psi_eigenvalues()?, n_ref, seed),
        QqReference::Mixture(w) => Ok(mixture_limit_sample(w, n_ref, seed)),
    }
}

/// Sorted null draws of `T_CQ / sigma` paired with equal-rank reference quantiles.
pub fn qq_pairs(model: &ModelSpec, reference: &QqReference, reps: usize, seed: u64, n_ref: usize) -> Result<Vec<(f64, f64)>> {
    if reps == 0 || n_ref == 0 {
        return Err(Error::param("reps", "need at least one replication and one reference draw"));
    }
    let emp = sorted(standardized_null_draws(model, reps, seed)?);
    let reference = sorted(reference_draws(model, reference, n_ref, RngSeed::with_stream(seed, u64::MAX))?);
    let r = emp.len() as f64;
    Ok(emp
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, quantile_min(&reference, (i as f64 + 0.5) / r)))
        .collect())
}

/// Mixture weights for the equicorrelated model at finite `p`: the leading
/// eigenvalue ratio of `Psi / sqrt(tr(Psi^2))`. The remaining `p - 1` equal
/// ratios each vanish as `p` grows and are absorbed into the normal component.
pub fn gamma_mixture_weights(gamma: f64, p: usize) -> Result<MixtureWeights> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} is not in [0, 1]")));
    }
    let pf = p as f64;
    let lead = pf * gamma + 1.0 - gamma;
    let rest = 1.0 - gamma;
    let norm = (lead * lead + (pf - 1.0) * rest * rest).sqrt();
    MixtureWeights::new(vec![lead / norm])
}

/// Size of each method on data resampled from the centered rows of two real
/// groups, which mimics their null distribution.
pub fn resampled_null_sizes(x1: &DataMatrix, x2: &DataMatrix, methods: &[Method], reps: usize, b: usize, alpha: f64, seed: u64) -> Result<ExperimentReport> {
    check_methods(methods)?;
    check_alpha(alpha)?;
    check_resamples(b)?;
    if x1.cols() != x2.cols() {
        return Err(Error::DimensionMismatch(x1.cols(), x2.cols()));
    }
    let start = Instant::now();
    let (c1, c2) = (x1.centered(), x2.centered());
    let draw = |m: &DataMatrix, rng: &mut rand_chacha::ChaCha8Rng| {
        let idx: Vec<usize> = (0..m.rows()).map(|_| uniform_index(rng, m.rows())).collect();
        m.select_rows(&idx)
    };
    let outcomes = run_replications(methods, reps, b, alpha, RngSeed::new(seed), |s| {
        (draw(&c1, &mut s.rng(1)), draw(&c2, &mut s.rng(2)))
    });
    Ok(ExperimentReport {
        model: "resampled".into(),
        n1: x1.rows(),
        n2: x2.rows(),
        p: x1.cols(),
        beta: 0.0,
        reps,
        b,
        alpha,
        seed,
        tallies: tally(methods, &outcomes),
        elapsed: start.elapsed(),
    })
}
