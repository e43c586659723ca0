//! Monte Carlo NEHVI with common random numbers and its maximizer.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, halton_points, hvi_sorted, sorted_front, Objectives};
use crate::gp::{factor_covariance, CrossPrediction, GpError, GpModel, SurrogatePosterior};

/// What the acquisition needs from a per-objective model.
pub trait Surrogate: Sync {
    /// Points the model was conditioned on.
    fn inputs(&self) -> &[Vec<f64>];
    fn posterior(&self, queries: &[Vec<f64>]) -> Result<SurrogatePosterior, GpError>;
    fn predict_with_cross(&self, x: &[f64]) -> Result<CrossPrediction, GpError>;
}

impl Surrogate for GpModel {
    fn inputs(&self) -> &[Vec<f64>] {
        GpModel::inputs(self)
    }

    fn posterior(&self, queries: &[Vec<f64>]) -> Result<SurrogatePosterior, GpError> {
        GpModel::posterior(self, queries)
    }

    fn predict_with_cross(&self, x: &[f64]) -> Result<CrossPrediction, GpError> {
        GpModel::predict_with_cross(self, x)
    }
}

struct ObjectiveDraws {
    /// Lower factor of the posterior covariance at the observed points.
    factor: DMatrix<f64>,
    /// `samples × observed` normals shared by every candidate.
    z: DMatrix<f64>,
    /// One extra normal per sample for the candidate's own residual.
    w: DVector<f64>,
}

/// Joint posterior draws at the observed points, fixed once so that every
/// candidate is scored against the same sampled fronts.
///
/// A candidate's draw is completed from the Cholesky factor of the joint
/// covariance: with `Σ_XX = L Lᵀ`, `l = L⁻¹ Σ_Xx` and
/// `d² = Σ_xx − lᵀl`, the draw is `μ_x + lᵀ z + d w`.
pub struct NehviContext<'a, S: Surrogate> {
    models: [&'a S; 2],
    reference: Objectives,
    draws: [ObjectiveDraws; 2],
    fronts: Vec<Vec<Objectives>>,
}

fn forward_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut x = DVector::zeros(n);
    for i in 0..n {
        let d = l[(i, i)];
        if d <= 1e-150 {
            continue;
        }
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / d;
    }
    x
}

impl<'a, S: Surrogate> NehviContext<'a, S> {
    pub fn new(models: [&'a S; 2], reference: Objectives, n_samples: usize, seed: u64) -> Result<Self, GpError> {
        if n_samples == 0 {
            return Err(GpError::Parameter("need at least one posterior sample".into()));
        }
        let base = models[0].inputs();
        if models[1].inputs() != base {
            return Err(GpError::Dimension("objective models were trained on different inputs".into()));
        }
        let n = base.len();
        let mut samples: Vec<DMatrix<f64>> = Vec::with_capacity(2);
        let mut draws = Vec::with_capacity(2);
        for (k, m) in models.iter().enumerate() {
            let post = m.posterior(base)?;
            let factor = factor_covariance(&post.cov)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let z = DMatrix::from_fn(n_samples, n, |_, _| StandardNormal.sample(&mut rng));
            let w = DVector::from_fn(n_samples, |_, _| StandardNormal.sample(&mut rng));
            let mut f: DMatrix<f64> = &z * factor.transpose();
            for mut row in f.row_iter_mut() {
                for (v, mu) in row.iter_mut().zip(&post.mean) {
                    *v += mu;
                }
            }
            samples.push(f);
            draws.push(ObjectiveDraws { factor, z, w });
        }
        let fronts = (0..n_samples)
            .map(|t| {
                let pts: Vec<Objectives> = (0..n).map(|i| [samples[0][(t, i)], samples[1][(t, i)]]).collect();
                sorted_front(&pts, &reference)
            })
            .collect();
        let mut it = draws.into_iter();
        let draws = [it.next().expect("two objectives"), it.next().expect("two objectives")];
        Ok(Self {
            models,
            reference,
            draws,
            fronts,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.fronts.len()
    }

    pub fn reference(&self) -> Objectives {
        self.reference
    }

    /// Sampled objective values at `x`, one row per posterior sample.
    pub fn sample_at(&self, x: &[f64]) -> Result<Vec<Objectives>, GpError> {
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2);
        for (m, dr) in self.models.iter().zip(&self.draws) {
            let cp = m.predict_with_cross(x)?;
            let l = forward_solve(&dr.factor, &cp.cross);
            let d = (cp.variance - l.norm_squared()).max(0.0).sqrt();
            let mut v = &dr.z * l + &dr.w * d;
            v.add_scalar_mut(cp.mean);
            cols.push(v);
        }
        Ok((0..self.n_samples()).map(|t| [cols[0][t], cols[1][t]]).collect())
    }

    /// Average hypervolume improvement of `x` over the sampled fronts.
    pub fn value(&self, x: &[f64]) -> Result<f64, GpError> {
        let ys = self.sample_at(x)?;
        let total: f64 = ys
            .iter()
            .zip(&self.fronts)
            .map(|(y, f)| hvi_sorted(y, f, &self.reference))
            .sum();
        Ok(total / ys.len() as f64)
    }

    /// Summed posterior variance of both objectives at `x`.
    pub fn variance(&self, x: &[f64]) -> Result<f64, GpError> {
        Ok(self.models[0].predict_with_cross(x)?.variance + self.models[1].predict_with_cross(x)?.variance)
    }
}

/// NEHVI of a single point; builds a fresh sample set from `seed`.
pub fn nehvi<S: Surrogate>(
    x: &[f64],
    models: [&S; 2],
    reference: Objectives,
    n_samples: usize,
    seed: u64,
) -> Result<f64, GpError> {
    NehviContext::new(models, reference, n_samples, seed)?.value(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionOptions {
    /// Local searches started from the best screened points.
    pub restarts: usize,
    /// Quasi-random points screened before the local searches.
    pub pool: usize,
    /// Perturbed copies of each current non-dominated scheme added to the pool.
    pub perturbations: usize,
    pub perturbation_scale: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            pool: 256,
            perturbations: 4,
            perturbation_scale: 0.05,
            initial_step: 0.1,
            min_step: 1e-4,
            max_evals: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    /// Maximizer in the unit box.
    pub x: Vec<f64>,
    pub value: f64,
    /// Acquisition at each local-search start, best first.
    pub start_values: Vec<f64>,
    /// True when every screened value was zero and the most uncertain
    /// pool point was returned instead.
    pub exploration: bool,
}

fn pattern_search<S: Surrogate>(
    ctx: &NehviContext<'_, S>,
    mut x: Vec<f64>,
    mut fx: f64,
    opts: &AcquisitionOptions,
) -> Result<(Vec<f64>, f64), GpError> {
    let mut step = opts.initial_step;
    let mut evals = 0;
    while step >= opts.min_step && evals < opts.max_evals {
        let mut improved = false;
        'dirs: for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + sign * step).clamp(0.0, 1.0);
                if cand[i] == x[i] {
                    continue;
                }
                evals += 1;
                let f = ctx.value(&cand)?;
                if f > fx {
                    x = cand;
                    fx = f;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((x, fx))
}

/// Maximizes NEHVI over the unit box: screens a quasi-random pool plus
/// perturbations of `incumbents`, then runs a shrinking-step pattern search
/// from the `restarts` best pool points. Every evaluation reuses the
/// context's samples, so the returned value is at least every start value.
pub fn optimize_acquisition<S: Surrogate>(
    ctx: &NehviContext<'_, S>,
    dims: usize,
    incumbents: &[Vec<f64>],
    opts: &AcquisitionOptions,
) -> Result<AcquisitionResult, GpError> {
    if dims == 0 || opts.restarts == 0 {
        return Err(GpError::Parameter("need at least one dimension and one restart".into()));
    }
    let mut pool = halton_points(opts.pool.max(1), dims, derive_seed(opts.seed, 101));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 202));
    let noise = Normal::new(0.0, opts.perturbation_scale.max(1e-12)).expect("positive scale");
    for inc in incumbents {
        for _ in 0..opts.perturbations {
            pool.push(inc.iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect());
        }
    }
    let values: Vec<f64> = pool.par_iter().map(|x| ctx.value(x)).collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    if values[order[0]] <= 0.0 {
        let vars: Vec<f64> = pool.par_iter().map(|x| ctx.variance(x)).collect::<Result<_, _>>()?;
        let best = (0..pool.len())
            .max_by(|&a, &b| vars[a].total_cmp(&vars[b]).then(b.cmp(&a)))
            .expect("non-empty pool");
        log::info!("acquisition is zero on the whole pool; exploring the most uncertain point");
        return Ok(AcquisitionResult {
            x: pool[best].clone(),
            value: 0.0,
            start_values: vec![0.0],
            exploration: true,
        });
    }
    let starts: Vec<usize> = order.into_iter().take(opts.restarts).collect();
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|&i| pattern_search(ctx, pool[i].clone(), values[i], opts))
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (k, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = k;
        }
    }
    let (x, value) = results[best].clone();
    Ok(AcquisitionResult {
        x,
        value,
        start_values: starts.iter().map(|&i| values[i]).collect(),
        exploration: false,
    })
}
