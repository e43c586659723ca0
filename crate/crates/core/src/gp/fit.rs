//! Maximum-likelihood estimation of kernel parameters and noise level.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{kernel_matrix_gradients, GpError, GpModel, KernelParams, Smoothness};

pub const NOISE_FLOOR: f64 = 1e-6;
pub const SIGMA_BOUNDS: (f64, f64) = (1e-3, 1e2);
pub const LENGTH_BOUNDS: (f64, f64) = (1e-3, 1e3);

const RATE_GROWTH: f64 = 1.5;
const MAX_HALVINGS: usize = 40;

/// `∂ MLL / ∂ σ_n² = ½ (αᵀα − tr K⁻¹)` with `α = K⁻¹ y`.
pub fn noise_gradient(model: &GpModel) -> f64 {
    let kinv = model.chol.inverse();
    0.5 * (model.alpha.dot(&model.alpha) - kinv.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Initial step on `log σ_n²` per unit gradient.
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub init: f64,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            tolerance: 1e-6,
            max_iter: 2000,
            init: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub noise_std: f64,
    pub mll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

/// Gradient ascent of the marginal likelihood in `s = log σ_n²`.
///
/// Accepted steps grow the rate by 1.5, rejected ones halve it, so every
/// accepted iterate improves the likelihood.
pub fn estimate_noise_std(
    x: &[Vec<f64>],
    y: &[f64],
    params: &KernelParams,
    opts: &NoiseOptions,
) -> Result<NoiseEstimate, GpError> {
    if x.len() < 2 {
        return Err(GpError::TooFewPoints(2));
    }
    if !(opts.learning_rate > 0.0 && opts.init > 0.0) {
        return Err(GpError::Parameter("learning rate and initial σ_n must be positive".into()));
    }
    let s_floor = 2.0 * NOISE_FLOOR.ln();
    let build = |s: f64| GpModel::new(x.to_vec(), y.to_vec(), params.clone(), (0.5 * s).exp());

    let mut s = 2.0 * opts.init.max(NOISE_FLOOR).ln();
    let mut model = build(s)?;
    let mut mll = model.log_marginal_likelihood();
    let mut rate = opts.learning_rate;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = (0.5 * s).exp().powi(2) * noise_gradient(&model);
        if grad.abs() < opts.tolerance || (s <= s_floor && grad < 0.0) {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = (s + rate * grad).max(s_floor);
            if let Ok(m) = build(cand) {
                let v = m.log_marginal_likelihood();
                if v > mll {
                    accepted = Some((cand, m, v));
                    break;
                }
            }
            rate *= 0.5;
        }
        let Some((cand, m, v)) = accepted else {
            converged = true;
            break;
        };
        let gain = v - mll;
        s = cand;
        model = m;
        mll = v;
        rate *= RATE_GROWTH;
        if gain < opts.tolerance {
            converged = true;
            break;
        }
    }
    let warning = (!converged).then(|| format!("noise ascent stopped after {iterations} iterations"));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(NoiseEstimate {
        noise_std: (0.5 * s).exp().max(NOISE_FLOOR),
        mll,
        iterations,
        converged,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starts per smoothness, the first at `init` (or a default).
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub init: Option<KernelParams>,
    pub smoothness: Vec<Smoothness>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 4,
            max_iter: 80,
            seed: 0,
            init: None,
            smoothness: Smoothness::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub params: KernelParams,
    pub mll: f64,
    /// Likelihood at every start point, in evaluation order.
    pub start_mlls: Vec<f64>,
}

fn unpack(theta: &[f64], nu: Smoothness) -> KernelParams {
    KernelParams {
        sigma: theta[0].exp(),
        nu,
        lengthscales: theta[1..].iter().map(|v| v.exp()).collect(),
    }
}

fn clamp_theta(theta: &mut [f64]) {
    theta[0] = theta[0].clamp(SIGMA_BOUNDS.0.ln(), SIGMA_BOUNDS.1.ln());
    for v in &mut theta[1..] {
        *v = v.clamp(LENGTH_BOUNDS.0.ln(), LENGTH_BOUNDS.1.ln());
    }
}

/// MLL and its gradient in `(log σ, log ℓ_1, …)`.
fn mll_and_gradient(
    x: &[Vec<f64>],
    y: &[f64],
    noise_std: f64,
    theta: &[f64],
    nu: Smoothness,
) -> Option<(f64, Vec<f64>)> {
    let p = unpack(theta, nu);
    let model = GpModel::new(x.to_vec(), y.to_vec(), p.clone(), noise_std).ok()?;
    let mll = model.log_marginal_likelihood();
    let kinv = model.chol.inverse();
    let w: DMatrix<f64> = &model.alpha * model.alpha.transpose() - kinv;
    let grad = kernel_matrix_gradients(x, &p)
        .iter()
        .map(|dk| 0.5 * w.component_mul(dk).sum())
        .collect();
    mll.is_finite().then_some((mll, grad))
}

/// Multi-start gradient ascent over `(log σ, log ℓ)` for each smoothness;
/// the best likelihood wins.
pub fn fit_hyperparameters(
    x: &[Vec<f64>],
    y: &[f64],
    noise_std: f64,
    opts: &FitOptions,
) -> Result<HyperFit, GpError> {
    if x.len() < 2 {
        return Err(GpError::TooFewPoints(2));
    }
    if x.len() != y.len() {
        return Err(GpError::Dimension(format!("{} inputs, {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<HyperFit> = None;
    let mut start_mlls = Vec::new();

    for &nu in &opts.smoothness {
        for start in 0..opts.starts.max(1) {
            let mut theta: Vec<f64> = if start == 0 {
                match &opts.init {
                    Some(p) if p.lengthscales.len() == d => std::iter::once(p.sigma.ln())
                        .chain(p.lengthscales.iter().map(|l| l.ln()))
                        .collect(),
                    _ => std::iter::once(0.0).chain(std::iter::repeat_n(0.5f64.ln(), d)).collect(),
                }
            } else {
                std::iter::once(rng.random_range(0.3f64.ln()..3f64.ln()))
                    .chain((0..d).map(|_| rng.random_range(0.05f64.ln()..2f64.ln())))
                    .collect()
            };
            clamp_theta(&mut theta);
            let Some((mut mll, mut grad)) = mll_and_gradient(x, y, noise_std, &theta, nu) else {
                start_mlls.push(f64::NEG_INFINITY);
                continue;
            };
            start_mlls.push(mll);
            let mut rate = 0.1;
            for _ in 0..opts.max_iter {
                // Project out components pushing against an active bound.
                let lo = [SIGMA_BOUNDS.0.ln(), LENGTH_BOUNDS.0.ln()];
                let hi = [SIGMA_BOUNDS.1.ln(), LENGTH_BOUNDS.1.ln()];
                for (k, g) in grad.iter_mut().enumerate() {
                    let b = usize::from(k > 0);
                    if (theta[k] <= lo[b] && *g < 0.0) || (theta[k] >= hi[b] && *g > 0.0) {
                        *g = 0.0;
                    }
                }
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm < 1e-6 {
                    break;
                }
                let mut moved = false;
                for _ in 0..MAX_HALVINGS {
                    let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + rate * g / norm).collect();
                    clamp_theta(&mut cand);
                    if let Some((v, g)) = mll_and_gradient(x, y, noise_std, &cand, nu) {
                        if v > mll {
                            let gain = v - mll;
                            theta = cand;
                            mll = v;
                            grad = g;
                            rate *= RATE_GROWTH;
                            moved = gain > 1e-9;
                            break;
                        }
                    }
                    rate *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if best.as_ref().is_none_or(|b| mll > b.mll) {
                best = Some(HyperFit {
                    params: unpack(&theta, nu),
                    mll,
                    start_mlls: Vec::new(),
                });
            }
        }
    }
    let mut fit = best.ok_or(GpError::NotPositiveDefinite(super::JITTER_LADDER[6]))?;
    fit.start_mlls = start_mlls;
    Ok(fit)
}
