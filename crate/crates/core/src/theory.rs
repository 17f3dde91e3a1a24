//! Known-population quantities: `Psi_n = Sigma1_bar / n1 + Sigma2_bar / n2`,
//! the exact null standard deviation of `T_CQ`, the standardized Gaussian
//! quadratic-form reference law `G_n`, the normal/chi-square mixture limit
//! family, and the local power predictor built on `G_n`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::empirical::{ecdf, quantile_min, sorted};
use crate::error::{check_alpha, Error, Result};
use crate::parallel::map_indices;
use crate::rng::RngSeed;

/// Largest dimension handed to the dense eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 4096;
pub const DEFAULT_GN_DRAWS: usize = 200_000;

const DRAW_CHUNK: usize = 4096;

/// A `p x p` covariance matrix, stored structurally where possible.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// `scale * I_p`
    ScaledIdentity { p: usize, scale: f64 },
    Diagonal(Vec<f64>),
    /// `gamma * 1 1^T + (1 - gamma) * I_p`
    Equicorrelated { p: usize, gamma: f64 },
    /// `sum_j weight_j v_j v_j^T + I_p`
    LowRankPlusIdentity { p: usize, factors: Vec<(f64, Vec<f64>)> },
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn identity(p: usize) -> Self {
        Covariance::ScaledIdentity { p, scale: 1.0 }
    }

    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        let c = Covariance::Dense(m);
        c.validate()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::ScaledIdentity { p, .. } | Covariance::Equicorrelated { p, .. } | Covariance::LowRankPlusIdentity { p, .. } => *p,
            Covariance::Diagonal(d) => d.len(),
            Covariance::Dense(m) => m.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCovariance(msg));
        match self {
            Covariance::ScaledIdentity { p, scale } => {
                if *p == 0 || !(*scale >= 0.0) || !scale.is_finite() {
                    return bad(format!("scaled identity needs p >= 1 and scale >= 0, got p={p}, scale={scale}"));
                }
            }
            Covariance::Diagonal(d) => {
                if d.is_empty() || d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return bad("diagonal entries must be finite and nonnegative".into());
                }
            }
            Covariance::Equicorrelated { p, gamma } => {
                if *p == 0 || !(0.0..=1.0).contains(gamma) {
                    return bad(format!("equicorrelation gamma={gamma} must lie in [0, 1]"));
                }
            }
            Covariance::LowRankPlusIdentity { p, factors } => {
                for (w, v) in factors {
                    if v.len() != *p {
                        return bad(format!("factor of length {} in dimension {p}", v.len()));
                    }
                    if !(*w >= 0.0) {
                        return bad(format!("factor weight {w} is negative"));
                    }
                }
            }
            Covariance::Dense(m) => {
                if m.nrows() != m.ncols() || m.nrows() == 0 {
                    return bad(format!("dense covariance is {}x{}", m.nrows(), m.ncols()));
                }
                let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
                for i in 0..m.nrows() {
                    for j in 0..i {
                        if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                            return bad(format!("dense covariance is not symmetric at ({i}, {j})"));
                        }
                    }
                }
                if m.nrows() <= DENSE_EIGEN_LIMIT {
                    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
                    if min < -1e-9 * scale {
                        return bad(format!("dense covariance has negative eigenvalue {min}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.dim();
        match self {
            Covariance::ScaledIdentity { scale, .. } => DMatrix::identity(p, p) * *scale,
            Covariance::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Covariance::Equicorrelated { gamma, .. } => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *gamma })
            }
            Covariance::LowRankPlusIdentity { factors, .. } => {
                let mut m = DMatrix::identity(p, p);
                for (w, v) in factors {
                    for i in 0..p {
                        for j in 0..p {
                            m[(i, j)] += w * v[i] * v[j];
                        }
                    }
                }
                m
            }
            Covariance::Dense(m) => m.clone(),
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        match self {
            Covariance::ScaledIdentity { p, scale } => Some(vec![*scale; *p]),
            Covariance::Diagonal(d) => Some(d.clone()),
            _ => None,
        }
    }

    /// `(a, b)` with `self = a * 1 1^T + b * I`, when it has that form.
    fn equicorrelated_form(&self) -> Option<(f64, f64)> {
        match self {
            Covariance::ScaledIdentity { scale, .. } => Some((0.0, *scale)),
            Covariance::Equicorrelated { gamma, .. } => Some((*gamma, 1.0 - gamma)),
            _ => None,
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Covariance::ScaledIdentity { p, scale } => *scale * *p as f64,
            Covariance::Diagonal(d) => d.iter().sum(),
            Covariance::Equicorrelated { p, .. } => *p as f64,
            Covariance::LowRankPlusIdentity { p, factors } => {
                *p as f64 + factors.iter().map(|(w, v)| w * norm_sq(v)).sum::<f64>()
            }
            Covariance::Dense(m) => m.trace(),
        }
    }

    /// `tr(self * other)`.
    pub fn trace_product(&self, other: &Covariance) -> Result<f64> {
        let p = self.dim();
        if other.dim() != p {
            return Err(Error::DimensionMismatch(p, other.dim()));
        }
        if let (Some(a), Some(b)) = (self.diagonal(), other.diagonal()) {
            return Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum());
        }
        if let (Some((a1, b1)), Some((a2, b2))) = (self.equicorrelated_form(), other.equicorrelated_form()) {
            // (a1 J + b1 I)(a2 J + b2 I) = a1 a2 p J + (a1 b2 + a2 b1) J + b1 b2 I, tr J = p
            let pf = p as f64;
            return Ok(a1 * a2 * pf * pf + (a1 * b2 + a2 * b1) * pf + b1 * b2 * pf);
        }
        if let (
            Covariance::LowRankPlusIdentity { factors: fa, .. },
            Covariance::LowRankPlusIdentity { factors: fb, .. },
        ) = (self, other)
        {
            let mut s = p as f64;
            s += fa.iter().map(|(w, v)| w * norm_sq(v)).sum::<f64>();
            s += fb.iter().map(|(w, v)| w * norm_sq(v)).sum::<f64>();
            for (wa, va) in fa {
                for (wb, vb) in fb {
                    let d: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                    s += wa * wb * d * d;
                }
            }
            return Ok(s);
        }
        let (a, b) = (self.to_dense(), other.to_dense());
        Ok(a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum())
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Observation-level covariance shared by `count` observations of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBlock {
    pub cov: Covariance,
    pub count: usize,
}

/// Population description: group sizes and per-observation covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSpec {
    n1: usize,
    n2: usize,
    group1: Vec<CovarianceBlock>,
    group2: Vec<CovarianceBlock>,
}

impl PsiSpec {
    /// All observations in group `k` share covariance `sigma_k`.
    pub fn homogeneous(n1: usize, n2: usize, sigma1: Covariance, sigma2: Covariance) -> Result<Self> {
        Self::with_blocks(
            n1,
            n2,
            vec![CovarianceBlock { cov: sigma1, count: n1 }],
            vec![CovarianceBlock { cov: sigma2, count: n2 }],
        )
    }

    pub fn with_blocks(n1: usize, n2: usize, group1: Vec<CovarianceBlock>, group2: Vec<CovarianceBlock>) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::TooFewObservations {
                what: "population spec",
                need: 2,
                got: n1.min(n2),
            });
        }
        for (n, g) in [(n1, &group1), (n2, &group2)] {
            let total: usize = g.iter().map(|b| b.count).sum();
            if total != n {
                return Err(Error::InvalidCovariance(format!("block counts sum to {total}, group size is {n}")));
            }
        }
        let p = group1.first().map(|b| b.cov.dim()).unwrap_or(0);
        for b in group1.iter().chain(&group2) {
            if b.cov.dim() != p {
                return Err(Error::DimensionMismatch(p, b.cov.dim()));
            }
            b.cov.validate()?;
        }
        Ok(Self { n1, n2, group1, group2 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dim(&self) -> usize {
        self.group1[0].cov.dim()
    }

    fn groups(&self) -> [(usize, &[CovarianceBlock]); 2] {
        [(self.n1, &self.group1), (self.n2, &self.group2)]
    }

    /// `(coefficient, covariance)` terms with `Psi = sum coefficient * covariance`.
    fn psi_terms(&self) -> Vec<(f64, &Covariance)> {
        let mut terms = vec![];
        for (n, blocks) in self.groups() {
            let nf = n as f64;
            for b in blocks {
                terms.push((b.count as f64 / (nf * nf), &b.cov));
            }
        }
        terms
    }

    /// `tr(Sigma_bar_a Sigma_bar_b)` for group indices 0/1.
    fn trace_bar_product(&self, a: usize, b: usize) -> Result<f64> {
        let groups = self.groups();
        let (na, ga) = groups[a];
        let (nb, gb) = groups[b];
        let mut s = 0.0;
        for x in ga {
            for y in gb {
                s += x.count as f64 * y.count as f64 * x.cov.trace_product(&y.cov)?;
            }
        }
        Ok(s / (na as f64 * nb as f64))
    }

    pub fn psi_matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut m = DMatrix::zeros(p, p);
        for (c, cov) in self.psi_terms() {
            m += cov.to_dense() * c;
        }
        m
    }

    pub fn trace_psi(&self) -> f64 {
        self.psi_terms().iter().map(|(c, cov)| c * cov.trace()).sum()
    }

    pub fn trace_psi_sq(&self) -> Result<f64> {
        let terms = self.psi_terms();
        let mut s = 0.0;
        for (ca, a) in &terms {
            for (cb, b) in &terms {
                s += ca * cb * a.trace_product(b)?;
            }
        }
        Ok(s)
    }

    /// Eigenvalues of `Psi`, descending. Diagonal and equicorrelated structures are
    /// handled analytically; anything else goes through a dense eigensolver.
    pub fn psi_eigenvalues(&self) -> Result<Vec<f64>> {
        let p = self.dim();
        let terms = self.psi_terms();
        let mut eig = if terms.iter().all(|(_, c)| c.diagonal().is_some()) {
            let mut d = vec![0.0; p];
            for (c, cov) in &terms {
                for (x, y) in d.iter_mut().zip(cov.diagonal().unwrap()) {
                    *x += c * y;
                }
            }
            d
        } else if terms.iter().all(|(_, c)| c.equicorrelated_form().is_some()) {
            let (mut a, mut b) = (0.0, 0.0);
            for (c, cov) in &terms {
                let (ca, cb) = cov.equicorrelated_form().unwrap();
                a += c * ca;
                b += c * cb;
            }
            let mut d = vec![b; p];
            d[0] = a * p as f64 + b;
            d
        } else {
            if p > DENSE_EIGEN_LIMIT {
                return Err(Error::param("p", format!("dense eigen-decomposition limited to p <= {DENSE_EIGEN_LIMIT}")));
            }
            SymmetricEigen::new(self.psi_matrix()).eigenvalues.iter().map(|v| v.max(0.0)).collect()
        };
        eig.sort_by(|a, b| b.total_cmp(a));
        Ok(eig)
    }
}

/// Exact null standard deviation of `T_CQ`:
///
/// `sigma^2 = sum_k 2/(n_k-1)^2 { tr(Sbar_k^2) - n_k^-2 sum_i tr(S_{k,i}^2) } + 4/(n1 n2) tr(Sbar_1 Sbar_2)`.
pub fn sigma_oracle(spec: &PsiSpec) -> Result<f64> {
    let mut var = 0.0;
    for (k, (n, blocks)) in spec.groups().into_iter().enumerate() {
        let nf = n as f64;
        let mut per_obs = 0.0;
        for b in blocks {
            per_obs += b.count as f64 * b.cov.trace_product(&b.cov)?;
        }
        var += 2.0 / ((nf - 1.0) * (nf - 1.0)) * (spec.trace_bar_product(k, k)? - per_obs / (nf * nf));
    }
    var += 4.0 / (spec.n1 as f64 * spec.n2 as f64) * spec.trace_bar_product(0, 1)?;
    if !(var >= 0.0) {
        return Err(Error::InvalidCovariance(format!("computed null variance {var} is negative")));
    }
    Ok(var.sqrt())
}

/// Draws in chunks, each chunk from its own stream so results do not depend on
/// thread count.
fn chunked_draws<F>(count: usize, seed: RngSeed, draw: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync + Send,
{
    let chunks = count.div_ceil(DRAW_CHUNK);
    map_indices(chunks, |c| {
        let mut rng = seed.rng(c as u64);
        let len = DRAW_CHUNK.min(count - c * DRAW_CHUNK);
        (0..len).map(|_| draw(&mut rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Groups equal eigenvalues (relative tolerance 1e-10) into `(value, multiplicity)`.
fn eigen_groups(eigs: &[f64]) -> Vec<(f64, usize)> {
    let mut v: Vec<f64> = eigs.iter().copied().filter(|&x| x > 0.0).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut groups: Vec<(f64, usize, f64)> = vec![];
    for x in v {
        match groups.last_mut() {
            Some((lead, n, sum)) if (*lead - x).abs() <= 1e-10 * *lead => {
                *n += 1;
                *sum += x;
            }
            _ => groups.push((x, 1, x)),
        }
    }
    groups.into_iter().map(|(_, n, sum)| (sum / n as f64, n)).collect()
}

fn check_eigs(eigs: &[f64]) -> Result<f64> {
    if eigs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("psi_eigs", "eigenvalues must be finite and nonnegative"));
    }
    let ss: f64 = eigs.iter().map(|v| v * v).sum();
    if !(ss > 0.0) {
        return Err(Error::param("psi_eigs", "at least one eigenvalue must be positive"));
    }
    Ok(ss)
}

/// `count` draws of `sum_i lambda_i (chi2_1 - 1) / sqrt(2 sum lambda_i^2)`.
///
/// Equal eigenvalues are sampled together as one chi-square with matching degrees
/// of freedom, which is exact in distribution.
pub fn reference_qf_sample(psi_eigs: &[f64], count: usize, seed: RngSeed) -> Result<Vec<f64>> {
    let ss = check_eigs(psi_eigs)?;
    let norm = (2.0 * ss).sqrt();
    let groups: Vec<(f64, ChiSquared<f64>, f64)> = eigen_groups(psi_eigs)
        .into_iter()
        .map(|(v, n)| (v, ChiSquared::new(n as f64).expect("positive dof"), n as f64))
        .collect();
    Ok(chunked_draws(count, seed, |rng| {
        let mut s = 0.0;
        for (v, chi, dof) in &groups {
            s += v * (chi.sample(rng) - dof);
        }
        s / norm
    }))
}

/// Mixture weights `kappa_1 >= kappa_2 >= ... >= 0` with `sum kappa^2 <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    kappas: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(mut kappas: Vec<f64>) -> Result<Self> {
        if kappas.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
            return Err(Error::param("kappas", "weights must be finite and nonnegative"));
        }
        let ss: f64 = kappas.iter().map(|k| k * k).sum();
        if ss > 1.0 + 1e-12 {
            return Err(Error::param("kappas", format!("sum of squares {ss} exceeds 1")));
        }
        kappas.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { kappas })
    }

    /// Weights from the eigenvalues of `Psi`: `kappa_i = lambda_i / sqrt(sum lambda^2)`.
    pub fn from_eigenvalues(eigs: &[f64]) -> Result<Self> {
        let ss = check_eigs(eigs)?;
        Self::new(eigs.iter().map(|v| v / ss.sqrt()).collect())
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn sum_sq(&self) -> f64 {
        self.kappas.iter().map(|k| k * k).sum()
    }
}

/// `count` draws of `(1 - sum kappa^2)^{1/2} xi_0 + 2^{-1/2} sum kappa_i (xi_i^2 - 1)`.
pub fn mixture_limit_sample(w: &MixtureWeights, count: usize, seed: RngSeed) -> Vec<f64> {
    let normal_weight = (1.0 - w.sum_sq()).max(0.0).sqrt();
    let groups = eigen_groups(w.kappas());
    let chis: Vec<(f64, ChiSquared<f64>, f64)> = groups
        .into_iter()
        .map(|(k, n)| (k, ChiSquared::new(n as f64).expect("positive dof"), n as f64))
        .collect();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    chunked_draws(count, seed, |rng| {
        let z: f64 = StandardNormal.sample(rng);
        let mut s = normal_weight * z;
        for (k, chi, dof) in &chis {
            s += half * k * (chi.sample(rng) - dof);
        }
        s
    })
}

/// Monte-Carlo estimate of `G_n`, the CDF of the standardized Gaussian quadratic
/// form, from one shared sample. CDF and quantile evaluations use the same
/// draws, so [`GnEstimate::power`] at zero shift returns `alpha` up to `1/N`.
#[derive(Debug, Clone)]
pub struct GnEstimate {
    draws: Vec<f64>,
    scale: f64,
}

impl GnEstimate {
    pub fn new(psi_eigs: &[f64], n_mc: usize, seed: RngSeed) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::param("n_mc", "need at least one Monte-Carlo draw"));
        }
        let ss = check_eigs(psi_eigs)?;
        Ok(Self {
            draws: sorted(reference_qf_sample(psi_eigs, n_mc, seed)?),
            scale: (2.0 * ss).sqrt(),
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        ecdf(&self.draws, x)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile_min(&self.draws, q)
    }

    /// `1 - G_n[G_n^{-1}(1 - alpha) - shift_norm_sq / sqrt(2 tr(Psi^2))]`.
    pub fn power(&self, alpha: f64, shift_norm_sq: f64) -> Result<f64> {
        check_alpha(alpha)?;
        if !(shift_norm_sq >= 0.0) {
            return Err(Error::param("shift_norm_sq", "must be nonnegative"));
        }
        Ok(1.0 - self.cdf(self.quantile(1.0 - alpha) - shift_norm_sq / self.scale))
    }
}

pub fn gn_cdf(psi_eigs: &[f64], x: f64, n_mc: usize, seed: RngSeed) -> Result<f64> {
    Ok(GnEstimate::new(psi_eigs, n_mc, seed)?.cdf(x))
}

/// Predicted local power of the randomization test for `||mu1 - mu2||^2 = shift_norm_sq`.
pub fn local_power_predict(psi_eigs: &[f64], alpha: f64, shift_norm_sq: f64, n_mc: usize, seed: RngSeed) -> Result<f64> {
    GnEstimate::new(psi_eigs, n_mc, seed)?.power(alpha, shift_norm_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::{ks_standard_normal, moments};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn identity_psi() {
        let (n, p) = (10, 7);
        let s = PsiSpec::homogeneous(n, n, Covariance::identity(p), Covariance::identity(p)).unwrap();
        let e = s.psi_eigenvalues().unwrap();
        assert!(e.iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert!((s.trace_psi_sq().unwrap() - 4.0 * p as f64 / (n * n) as f64).abs() < 1e-12);
        assert!((s.trace_psi() - 0.2 * p as f64).abs() < 1e-12);
    }

    #[test]
    fn equicorrelated_eigenvalues() {
        let (p, g) = (50, 0.3);
        let c = Covariance::Equicorrelated { p, gamma: g };
        let s = PsiSpec::homogeneous(4, 4, c.clone(), c).unwrap();
        let e = s.psi_eigenvalues().unwrap();
        let f = 0.5;
        assert!((e[0] - f * (p as f64 * g + 1.0 - g)).abs() < 1e-12);
        assert!(e[1..].iter().all(|v| (v - f * (1.0 - g)).abs() < 1e-12));
        // analytic vs dense trace products
        let dense = Covariance::Dense(Covariance::Equicorrelated { p, gamma: g }.to_dense());
        let eq = Covariance::Equicorrelated { p, gamma: g };
        let a = eq.trace_product(&eq).unwrap();
        let b = dense.trace_product(&dense).unwrap();
        assert!((a - b).abs() < 1e-9 * b);
    }

    #[test]
    fn low_rank_trace_product_matches_dense() {
        let p = 8;
        let v1: Vec<f64> = (0..p).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let v2: Vec<f64> = (0..p).map(|i| i as f64 * 0.1).collect();
        let a = Covariance::LowRankPlusIdentity { p, factors: vec![(1.0, v1.clone()), (0.5, v2.clone())] };
        let b = Covariance::LowRankPlusIdentity { p, factors: vec![(2.0, v2)] };
        let want = Covariance::Dense(a.to_dense()).trace_product(&Covariance::Dense(b.to_dense())).unwrap();
        assert!((a.trace_product(&b).unwrap() - want).abs() < 1e-10 * want);
        assert!((a.trace() - a.to_dense().trace()).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_dense() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(Covariance::dense(m).is_err());
        let mut neg = DMatrix::identity(2, 2);
        neg[(0, 1)] = 2.0;
        neg[(1, 0)] = 2.0;
        assert!(Covariance::dense(neg).is_err());
    }

    #[test]
    fn sigma_oracle_identity_small() {
        let s = PsiSpec::homogeneous(4, 4, Covariance::identity(2), Covariance::identity(2)).unwrap();
        assert!((sigma_oracle(&s).unwrap().powi(2) - 7.0 / 6.0).abs() < 1e-12);
    }

    /// Entrywise recomputation of the null-variance formula for diagonal covariances.
    fn sigma_sq_diagonal_reference(n1: usize, n2: usize, g1: &[Vec<f64>], g2: &[Vec<f64>]) -> f64 {
        let p = g1[0].len();
        let bar = |g: &[Vec<f64>]| -> Vec<f64> {
            (0..p).map(|j| g.iter().map(|d| d[j]).sum::<f64>() / g.len() as f64).collect()
        };
        let (b1, b2) = (bar(g1), bar(g2));
        let mut var = 0.0;
        for (n, g, b) in [(n1, g1, &b1), (n2, g2, &b2)] {
            let nf = n as f64;
            let tr_bar_sq: f64 = b.iter().map(|x| x * x).sum();
            let tr_obs: f64 = g.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>()).sum();
            var += 2.0 / (nf - 1.0).powi(2) * (tr_bar_sq - tr_obs / (nf * nf));
        }
        var + 4.0 / (n1 * n2) as f64 * b1.iter().zip(&b2).map(|(x, y)| x * y).sum::<f64>()
    }

    #[test]
    fn sigma_oracle_matches_entrywise_reference() {
        let mut rng = RngSeed::new(77).rng(0);
        let p = 6;
        let mut draw = || -> Vec<f64> { (0..p).map(|_| rand::Rng::random_range(&mut rng, 0.1..3.0)).collect() };
        let g1: Vec<Vec<f64>> = (0..5).map(|_| draw()).collect();
        let g2: Vec<Vec<f64>> = (0..7).map(|_| draw()).collect();
        let blocks = |g: &[Vec<f64>]| g.iter().map(|d| CovarianceBlock { cov: Covariance::Diagonal(d.clone()), count: 1 }).collect();
        let spec = PsiSpec::with_blocks(5, 7, blocks(&g1), blocks(&g2)).unwrap();
        let got = sigma_oracle(&spec).unwrap().powi(2);
        let want = sigma_sq_diagonal_reference(5, 7, &g1, &g2);
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn sigma_ratio_to_trace_large_n() {
        let p = 100;
        let s = PsiSpec::homogeneous(64, 64, Covariance::identity(p), Covariance::identity(p)).unwrap();
        let ratio = sigma_oracle(&s).unwrap().powi(2) / (2.0 * s.trace_psi_sq().unwrap());
        assert!((ratio - 1.0).abs() < 0.03, "{ratio}");
    }

    #[test]
    fn block_counts_must_match() {
        let c = Covariance::identity(3);
        let bad = PsiSpec::with_blocks(4, 4, vec![CovarianceBlock { cov: c.clone(), count: 3 }], vec![CovarianceBlock { cov: c, count: 4 }]);
        assert!(bad.is_err());
    }

    #[test]
    fn single_eigenvalue_reference_moments() {
        let n = 200_000;
        let d = reference_qf_sample(&[2.5, 0.0, 0.0], n, RngSeed::new(1)).unwrap();
        let (m, v, _) = moments(&d);
        let rn = (n as f64).sqrt();
        assert!(m.abs() < 4.0 / rn);
        // sample variance of a standardized chi2_1 has standard error sqrt(14 / N)
        assert!((v - 1.0).abs() < 4.0 * 14f64.sqrt() / rn, "{v}");
        assert!(d.iter().all(|&x| x >= -std::f64::consts::FRAC_1_SQRT_2 - 1e-12));
        assert!(reference_qf_sample(&[0.0, 0.0], 10, RngSeed::new(1)).is_err());
        assert!(reference_qf_sample(&[1.0, -1.0], 10, RngSeed::new(1)).is_err());
    }

    #[test]
    fn many_equal_eigenvalues_nearly_normal() {
        let eigs = vec![1.0; 10_000];
        let d = reference_qf_sample(&eigs, 100_000, RngSeed::new(2)).unwrap();
        let (m, v, s) = moments(&d);
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.02);
        assert!(s.abs() < 0.05, "skew {s}");
    }

    #[test]
    fn mixture_validation_and_normal_case() {
        assert!(MixtureWeights::new(vec![0.9, 0.9]).is_err());
        assert!(MixtureWeights::new(vec![-0.1]).is_err());
        let w = MixtureWeights::new(vec![0.2, 0.6]).unwrap();
        assert_eq!(w.kappas(), &[0.6, 0.2]);

        let n = 50_000;
        let d = mixture_limit_sample(&MixtureWeights::new(vec![]).unwrap(), n, RngSeed::new(3));
        assert!(ks_standard_normal(&d) < 1.63 / (n as f64).sqrt());
    }

    #[test]
    fn mixture_moments_for_any_weights() {
        let w = MixtureWeights::new(vec![0.5, 0.4, 0.3]).unwrap();
        let d = mixture_limit_sample(&w, 200_000, RngSeed::new(4));
        let (m, v, _) = moments(&d);
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.02, "{m} {v}");
    }

    #[test]
    fn gn_limits_and_monotonicity() {
        let g = GnEstimate::new(&[1.0], 20_000, RngSeed::new(5)).unwrap();
        assert_eq!(g.cdf(1e9), 1.0);
        assert_eq!(g.cdf(-1e9), 0.0);
        assert_eq!(g.cdf(-std::f64::consts::FRAC_1_SQRT_2 - 1e-9), 0.0);
        let xs: Vec<f64> = (-20..40).map(|i| i as f64 * 0.1).collect();
        assert!(xs.windows(2).all(|w| g.cdf(w[0]) <= g.cdf(w[1])));
        assert!(gn_cdf(&[1.0], 0.0, 0, RngSeed::new(1)).is_err());
    }

    #[test]
    fn gn_normal_limit_median() {
        let v = gn_cdf(&vec![1.0; 10_000], 0.0, 100_000, RngSeed::new(6)).unwrap();
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn local_power_round_trip_and_limits() {
        let eigs = vec![1.0; 10_000];
        let n_mc = 200_000;
        let g = GnEstimate::new(&eigs, n_mc, RngSeed::new(7)).unwrap();
        assert!((g.power(0.05, 0.0).unwrap() - 0.05).abs() <= 1.0 / n_mc as f64 + 1e-12);
        assert_eq!(g.power(0.05, 1e12).unwrap(), 1.0);
        // standardized shift beta = 1
        let shift = (2.0 * 10_000f64).sqrt();
        let want = 1.0 - Normal::standard().cdf(1.6449 - 1.0);
        let got = g.power(0.05, shift).unwrap();
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
        assert!(g.power(0.05, -1.0).is_err());
    }
}
