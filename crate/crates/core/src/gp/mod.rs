//! Gaussian-process surrogates with closed-form Matérn kernels.
//!
//! Models work on whatever inputs and targets they are given; callers
//! normalize inputs to the unit box and standardize targets with
//! [`Standardizer`] first.

mod fit;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{
    estimate_noise_std, fit_hyperparameters, noise_gradient, FitOptions, HyperFit, NoiseEstimate,
    NoiseOptions, LENGTH_BOUNDS, NOISE_FLOOR, SIGMA_BOUNDS,
};

/// Diagonal jitter tried in turn when a factorization fails.
pub const JITTER_LADDER: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("unsupported smoothness ν = {0}; expected 0.5, 1.5 or 2.5")]
    Smoothness(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("matrix is not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("need at least {0} training points")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "0.5")]
    Half,
    #[serde(rename = "1.5")]
    ThreeHalves,
    #[serde(rename = "2.5")]
    FiveHalves,
}

impl Smoothness {
    pub const ALL: [Smoothness; 3] = [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves];

    pub fn from_nu(nu: f64) -> Result<Self, GpError> {
        match nu {
            v if v == 0.5 => Ok(Self::Half),
            v if v == 1.5 => Ok(Self::ThreeHalves),
            v if v == 2.5 => Ok(Self::FiveHalves),
            v => Err(GpError::Smoothness(v)),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }

    /// Correlation at scaled distance `r`.
    fn corr(self, r: f64) -> f64 {
        match self {
            Self::Half => (-r).exp(),
            Self::ThreeHalves => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Self::FiveHalves => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// `(d corr / dr) / r`, finite at `r = 0` except for ν = 1/2.
    fn dcorr_over_r(self, r: f64) -> f64 {
        match self {
            Self::Half => {
                if r > 0.0 {
                    -(-r).exp() / r
                } else {
                    0.0
                }
            }
            Self::ThreeHalves => -3.0 * (-(3f64.sqrt()) * r).exp(),
            Self::FiveHalves => {
                let s = 5f64.sqrt() * r;
                -5.0 / 3.0 * (1.0 + s) * (-s).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Output scale σ; `k(x, x) = σ²`.
    pub sigma: f64,
    pub nu: Smoothness,
    /// One length scale per input dimension.
    pub lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn isotropic(sigma: f64, nu: Smoothness, ell: f64, dims: usize) -> Self {
        Self {
            sigma,
            nu,
            lengthscales: vec![ell; dims],
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sigma) {
            return Err(GpError::Parameter(format!("σ = {}", self.sigma)));
        }
        if self.lengthscales.is_empty() || !self.lengthscales.iter().all(|l| ok(*l)) {
            return Err(GpError::Parameter(format!("length scales {:?}", self.lengthscales)));
        }
        Ok(())
    }

    fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Matérn covariance between two points.
pub fn matern_kernel(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64, GpError> {
    if x.len() != y.len() || x.len() != params.lengthscales.len() {
        return Err(GpError::Dimension(format!(
            "points of length {} and {} with {} length scales",
            x.len(),
            y.len(),
            params.lengthscales.len()
        )));
    }
    Ok(kernel(x, y, params))
}

fn kernel(x: &[f64], y: &[f64], p: &KernelParams) -> f64 {
    p.sigma * p.sigma * p.nu.corr(p.scaled_distance(x, y))
}

pub fn kernel_matrix(a: &[Vec<f64>], b: &[Vec<f64>], p: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel(&a[i], &b[j], p))
}

/// Derivatives of the kernel matrix with respect to `log σ` and each
/// `log ℓ_d`, in that order.
pub(crate) fn kernel_matrix_gradients(x: &[Vec<f64>], p: &KernelParams) -> Vec<DMatrix<f64>> {
    let n = x.len();
    let d = p.lengthscales.len();
    let s2 = p.sigma * p.sigma;
    let mut out = vec![DMatrix::zeros(n, n); d + 1];
    for i in 0..n {
        for j in i..n {
            let r = p.scaled_distance(&x[i], &x[j]);
            let dk_log_sigma = 2.0 * s2 * p.nu.corr(r);
            let g = s2 * p.nu.dcorr_over_r(r);
            out[0][(i, j)] = dk_log_sigma;
            out[0][(j, i)] = dk_log_sigma;
            for k in 0..d {
                // dr/dlog ℓ = −(Δ/ℓ)²/r, so dk/dlog ℓ = −(dk/dr / r)(Δ/ℓ)².
                let u = ((x[i][k] - x[j][k]) / p.lengthscales[k]).powi(2);
                let v = if r > 0.0 { -g * u } else { 0.0 };
                out[k + 1][(i, j)] = v;
                out[k + 1][(j, i)] = v;
            }
        }
    }
    out
}

/// Cholesky factor of `m`, escalating diagonal jitter along [`JITTER_LADDER`].
/// Returns the factor and the jitter that was needed (0 when none).
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let scale = m.diagonal().iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for j in JITTER_LADDER {
        let mut k = m.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += j * scale;
        }
        if let Some(c) = k.cholesky() {
            return Ok((c, j * scale));
        }
    }
    Err(GpError::NotPositiveDefinite(JITTER_LADDER[JITTER_LADDER.len() - 1] * scale))
}

/// Z-scoring of one target column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Population statistics; a constant column gets unit scale.
    pub fn fit(y: &[f64]) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 * (1.0 + mean.abs()) { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.mean + self.std * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePosterior {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl SurrogatePosterior {
    pub fn variance(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }
}

/// Posterior at one point together with its covariance to the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossPrediction {
    pub mean: f64,
    pub variance: f64,
    pub cross: DVector<f64>,
}

/// A zero-mean GP conditioned on noisy observations.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub params: KernelParams,
    pub noise_std: f64,
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, params: KernelParams, noise_std: f64) -> Result<Self, GpError> {
        params.validate()?;
        if x.is_empty() {
            return Err(GpError::TooFewPoints(1));
        }
        if x.len() != y.len() {
            return Err(GpError::Dimension(format!("{} inputs, {} targets", x.len(), y.len())));
        }
        let d = params.lengthscales.len();
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(GpError::Dimension(format!("input of length {} with {d} length scales", bad.len())));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(GpError::Parameter(format!("σ_n = {noise_std}")));
        }
        let mut k = kernel_matrix(&x, &x, &params);
        for i in 0..x.len() {
            k[(i, i)] += noise_std * noise_std;
        }
        let (chol, jitter) = robust_cholesky(&k)?;
        let y = DVector::from_vec(y);
        let alpha = chol.solve(&y);
        Ok(Self {
            params,
            noise_std,
            x,
            y,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        self.y.as_slice()
    }

    /// Diagonal jitter added on top of σ_n² to factorize.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `−½ yᵀK⁻¹y − ½ log|K| − (n/2) log 2π` with `K = K_f + σ_n² I`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        -0.5 * self.y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn posterior(&self, queries: &[Vec<f64>]) -> Result<SurrogatePosterior, GpError> {
        let d = self.params.lengthscales.len();
        if let Some(bad) = queries.iter().find(|q| q.len() != d) {
            return Err(GpError::Dimension(format!("query of length {} in {d} dimensions", bad.len())));
        }
        let ks = kernel_matrix(&self.x, queries, &self.params);
        let mean = ks.transpose() * &self.alpha;
        let v = self.chol.l_dirty().solve_lower_triangular(&ks).expect("factor has a positive diagonal");
        let mut cov = kernel_matrix(queries, queries, &self.params) - v.transpose() * v;
        cov = (&cov + cov.transpose()) * 0.5;
        let s2 = self.params.sigma * self.params.sigma;
        for i in 0..queries.len() {
            cov[(i, i)] = cov[(i, i)].clamp(0.0, s2);
        }
        Ok(SurrogatePosterior {
            mean: mean.iter().copied().collect(),
            cov,
        })
    }

    /// Posterior mean and variance at `x`, and the posterior covariance of
    /// `x` with every training input.
    ///
    /// Uses `Σ(X, x) = s² K_n⁻¹ k(X, x)` where `s²` is the diagonal added to
    /// the kernel matrix (noise plus jitter), so it costs `O(n²)`.
    pub fn predict_with_cross(&self, x: &[f64]) -> Result<CrossPrediction, GpError> {
        let d = self.params.lengthscales.len();
        if x.len() != d {
            return Err(GpError::Dimension(format!("query of length {} in {d} dimensions", x.len())));
        }
        let kx = DVector::from_fn(self.len(), |i, _| kernel(&self.x[i], x, &self.params));
        let mean = kx.dot(&self.alpha);
        let w = self.chol.solve(&kx);
        let s2 = self.params.sigma * self.params.sigma;
        let variance = (s2 - kx.dot(&w)).clamp(0.0, s2);
        let cross = w * (self.noise_std * self.noise_std + self.jitter);
        Ok(CrossPrediction { mean, variance, cross })
    }

    /// Posterior draws at `queries` as rows of a `n_samples × queries` matrix.
    pub fn sample_posterior(
        &self,
        queries: &[Vec<f64>],
        n_samples: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>, GpError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(queries.len(), n_samples, |_, _| StandardNormal.sample(&mut rng));
        let post = self.posterior(queries)?;
        sample_with_normals(&post, &z)
    }
}

/// Joint draws `μ + L z` for the columns of `z` (shape `queries × samples`).
/// Reusing one `z` across calls gives common random numbers.
pub fn sample_with_normals(post: &SurrogatePosterior, z: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    let q = post.mean.len();
    if z.nrows() != q {
        return Err(GpError::Dimension(format!("{} normals per sample for {q} queries", z.nrows())));
    }
    if q == 0 {
        return Ok(DMatrix::zeros(z.ncols(), 0));
    }
    let l = factor_covariance(&post.cov)?;
    let mut draws = (l * z).transpose();
    for mut row in draws.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&post.mean) {
            *v += m;
        }
    }
    Ok(draws)
}

/// Lower factor of a PSD covariance; rank-deficient matrices get jitter
/// from [`JITTER_LADDER`], and an all-zero matrix factors to zero.
pub fn factor_covariance(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, GpError> {
    let scale = cov.diagonal().iter().fold(0.0_f64, |a, v| a.max(*v));
    if scale <= 0.0 {
        return Ok(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    Ok(robust_cholesky(cov)?.0.l())
}
