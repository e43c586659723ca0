//! The adaptive loop: fit surrogates, pick a reference point, maximize NEHVI,
//! evaluate, repeat; then report the front of posterior means.

use serde::{Deserialize, Serialize};

use super::{
    adaptive_reference, derive_seed, from_unit, halton_points, hypervolume, optimize_acquisition,
    pareto_indices, to_unit, AcquisitionOptions, FrontMember, NehviContext, Objectives, ParetoFront,
    Provenance, ReferencePoint,
};
use crate::gp::{
    estimate_noise_std, fit_hyperparameters, FitOptions, GpError, GpModel, KernelParams, NoiseOptions,
    Standardizer,
};

/// Black-box map from a raw scheme to its two objectives.
pub trait Evaluator {
    fn evaluate(&mut self, x: &[f64]) -> Result<Objectives, String>;
}

impl<F: FnMut(&[f64]) -> Result<Objectives, String>> Evaluator for F {
    fn evaluate(&mut self, x: &[f64]) -> Result<Objectives, String> {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmboError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fewer than two successful evaluations; cannot fit a surrogate")]
    TooFewSuccesses,
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmboConfig {
    /// Initial quasi-random design size; `2d + 2` when unset.
    pub n_init: Option<usize>,
    /// Acquisition iterations after the initial design.
    pub iterations: usize,
    /// Posterior samples per NEHVI estimate.
    pub n_samples: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Hyperparameter starts per smoothness.
    pub fit_starts: usize,
    pub fit_max_iter: usize,
    pub noise: NoiseOptions,
    pub acquisition: AcquisitionOptions,
}

impl Default for AmboConfig {
    fn default() -> Self {
        Self {
            n_init: None,
            iterations: 50,
            n_samples: 128,
            restarts: 8,
            seed: 0,
            fit_starts: 3,
            fit_max_iter: 60,
            noise: NoiseOptions::default(),
            acquisition: AcquisitionOptions::default(),
        }
    }
}

impl AmboConfig {
    pub fn initial_size(&self, dims: usize) -> usize {
        self.n_init.unwrap_or(2 * dims + 2)
    }

    /// Splits a total evaluation budget into the initial design and the
    /// acquisition iterations.
    pub fn with_budget(mut self, budget: usize, dims: usize) -> Self {
        let n0 = self.initial_size(dims).min(budget);
        self.n_init = Some(n0);
        self.iterations = budget - n0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmboDiagnostics {
    pub noise_std: [f64; 2],
    pub kernels: [KernelParams; 2],
    /// In standardized objective units.
    pub reference: ReferencePoint,
    pub acquisition: f64,
    pub exploration: bool,
    /// Hypervolume of the standardized observations before this candidate,
    /// against `reference`.
    pub hypervolume: f64,
}

/// One evaluation, in the order it happened. Shared by every optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub evaluation: usize,
    /// 0 for the initial design; loop iteration or generation otherwise.
    pub iteration: usize,
    pub scheme: Vec<f64>,
    pub objectives: Option<Objectives>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambo: Option<AmboDiagnostics>,
}

/// Evaluated schemes in unit-box coordinates with their raw objectives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Option<Objectives>>,
    pub iteration: usize,
}

impl ObservationSet {
    pub fn successes(&self) -> usize {
        self.y.iter().filter(|y| y.is_some()).count()
    }

    /// Z-scored targets per objective. Failed evaluations are placed just
    /// beyond the worst success so the surrogate steers away from them.
    pub fn standardized(&self) -> Result<([Vec<f64>; 2], [Standardizer; 2]), AmboError> {
        if self.successes() < 2 {
            return Err(AmboError::TooFewSuccesses);
        }
        let mut out: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut stats = [Standardizer { mean: 0.0, std: 1.0 }; 2];
        for k in 0..2 {
            let ok: Vec<f64> = self.y.iter().flatten().map(|y| y[k]).collect();
            let hi = ok.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = ok.iter().copied().fold(f64::INFINITY, f64::min);
            let penalty = hi + 0.1 * (hi - lo) + 1e-9 * (1.0 + hi.abs());
            let raw: Vec<f64> = self.y.iter().map(|y| y.map_or(penalty, |v| v[k])).collect();
            stats[k] = Standardizer::fit(&raw);
            out[k] = raw.iter().map(|v| stats[k].apply(*v)).collect();
        }
        Ok((out, stats))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmboRun {
    pub front: ParetoFront,
    pub log: Vec<RunRecord>,
    /// Final posterior means and standard deviations at every evaluated
    /// scheme, in raw units.
    pub posterior_mean: Vec<Objectives>,
    pub posterior_std: Vec<Objectives>,
}

struct Fitted {
    model: GpModel,
    noise: f64,
}

fn fit_objective(
    x: &[Vec<f64>],
    y: &[f64],
    prev: Option<&Fitted>,
    cfg: &AmboConfig,
    seed: u64,
) -> Result<Fitted, GpError> {
    let noise0 = prev.map_or(cfg.noise.init, |p| p.noise);
    let opts = FitOptions {
        starts: cfg.fit_starts,
        max_iter: cfg.fit_max_iter,
        seed,
        init: prev.map(|p| p.model.params.clone()),
        ..FitOptions::default()
    };
    let hyper = fit_hyperparameters(x, y, noise0, &opts)?;
    let noise_opts = NoiseOptions {
        // Restarting the ascent away from the floor lets it climb back if
        // the data turn noisy.
        init: noise0.max(1e-2),
        ..cfg.noise
    };
    let est = estimate_noise_std(x, y, &hyper.params, &noise_opts)?;
    let model = GpModel::new(x.to_vec(), y.to_vec(), hyper.params, est.noise_std)?;
    Ok(Fitted {
        model,
        noise: est.noise_std,
    })
}

fn fit_both(
    obs: &ObservationSet,
    targets: &[Vec<f64>; 2],
    prev: &Option<[Fitted; 2]>,
    cfg: &AmboConfig,
    seed: u64,
) -> Result<[Fitted; 2], AmboError> {
    let p0 = prev.as_ref().map(|p| &p[0]);
    let p1 = prev.as_ref().map(|p| &p[1]);
    let (a, b) = rayon::join(
        || fit_objective(&obs.x, &targets[0], p0, cfg, derive_seed(seed, 1)),
        || fit_objective(&obs.x, &targets[1], p1, cfg, derive_seed(seed, 2)),
    );
    Ok([a?, b?])
}

fn record(
    evaluator: &mut dyn Evaluator,
    obs: &mut ObservationSet,
    log: &mut Vec<RunRecord>,
    observer: &mut dyn FnMut(&RunRecord),
    unit: Vec<f64>,
    bounds: &[(f64, f64)],
    ambo: Option<AmboDiagnostics>,
) {
    let scheme = from_unit(&unit, bounds);
    let (objectives, error) = match evaluator.evaluate(&scheme) {
        Ok(y) if y.iter().all(|v| v.is_finite()) => (Some(y), None),
        Ok(y) => (None, Some(format!("non-finite objectives {y:?}"))),
        Err(e) => (None, Some(e)),
    };
    if let Some(e) = &error {
        log::warn!("evaluation {} failed: {e}", log.len());
    }
    let rec = RunRecord {
        evaluation: log.len(),
        iteration: obs.iteration,
        scheme,
        objectives,
        error,
        ambo,
    };
    observer(&rec);
    obs.x.push(unit);
    obs.y.push(objectives);
    log.push(rec);
}

fn final_posterior(
    obs: &ObservationSet,
    prev: &Option<[Fitted; 2]>,
    cfg: &AmboConfig,
) -> Result<(Vec<Objectives>, Vec<Objectives>), AmboError> {
    let (targets, stats) = obs.standardized()?;
    let models = fit_both(obs, &targets, prev, cfg, derive_seed(cfg.seed, 999_999))?;
    let mut mean = vec![[0.0; 2]; obs.x.len()];
    let mut std = vec![[0.0; 2]; obs.x.len()];
    for k in 0..2 {
        let post = models[k].model.posterior(&obs.x)?;
        for i in 0..obs.x.len() {
            mean[i][k] = stats[k].invert(post.mean[i]);
            std[i][k] = post.cov[(i, i)].max(0.0).sqrt() * stats[k].std;
        }
    }
    Ok((mean, std))
}

/// Raw-unit posterior means and standard deviations at every scheme of a
/// finished run of any optimizer, from surrogates fitted on its log.
pub fn posterior_estimates(
    log: &[RunRecord],
    bounds: &[(f64, f64)],
    cfg: &AmboConfig,
) -> Result<(Vec<Objectives>, Vec<Objectives>), AmboError> {
    let obs = ObservationSet {
        x: log.iter().map(|r| to_unit(&r.scheme, bounds)).collect(),
        y: log.iter().map(|r| r.objectives).collect(),
        iteration: 0,
    };
    final_posterior(&obs, &None, cfg)
}

/// Runs the optimizer with no progress callback.
pub fn ambo_run(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    cfg: &AmboConfig,
) -> Result<AmboRun, AmboError> {
    ambo_run_with(evaluator, bounds, cfg, &mut |_| {})
}

/// Runs the optimizer, handing every record to `observer` as soon as it
/// exists so callers can persist partial logs.
pub fn ambo_run_with(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    cfg: &AmboConfig,
    observer: &mut dyn FnMut(&RunRecord),
) -> Result<AmboRun, AmboError> {
    let d = bounds.len();
    if d == 0 || bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(AmboError::Config(format!("invalid bounds {bounds:?}")));
    }
    if cfg.n_samples == 0 || cfg.restarts == 0 || cfg.fit_starts == 0 {
        return Err(AmboError::Config("sample, restart and start counts must be ≥ 1".into()));
    }
    let n0 = cfg.initial_size(d);
    if n0 < 2 {
        return Err(AmboError::Config("the initial design needs at least two points".into()));
    }
    let mut obs = ObservationSet::default();
    let mut log = Vec::new();
    for u in halton_points(n0, d, derive_seed(cfg.seed, 0)) {
        record(evaluator, &mut obs, &mut log, observer, u, bounds, None);
    }

    let mut fitted: Option<[Fitted; 2]> = None;
    for j in 1..=cfg.iterations {
        obs.iteration = j;
        let (targets, _) = obs.standardized()?;
        let seed = derive_seed(cfg.seed, 1000 + j as u64);
        let models = fit_both(&obs, &targets, &fitted, cfg, seed)?;
        let yhat: Vec<Objectives> = (0..obs.x.len()).map(|i| [targets[0][i], targets[1][i]]).collect();
        let reference = adaptive_reference(&yhat);
        let ctx = NehviContext::new([&models[0].model, &models[1].model], reference.point, cfg.n_samples, seed)?;
        let incumbents: Vec<Vec<f64>> = pareto_indices(&yhat).into_iter().map(|i| obs.x[i].clone()).collect();
        let acq = optimize_acquisition(
            &ctx,
            d,
            &incumbents,
            &AcquisitionOptions {
                restarts: cfg.restarts,
                seed: derive_seed(seed, 3),
                ..cfg.acquisition
            },
        )?;
        let diag = AmboDiagnostics {
            noise_std: [models[0].noise, models[1].noise],
            kernels: [models[0].model.params.clone(), models[1].model.params.clone()],
            reference,
            acquisition: acq.value,
            exploration: acq.exploration,
            hypervolume: hypervolume(&yhat, &reference.point),
        };
        drop(ctx);
        fitted = Some(models);
        record(evaluator, &mut obs, &mut log, observer, acq.x, bounds, Some(diag));
    }

    // Final surrogates over every observation; the front is read off their
    // means at the evaluated schemes.
    let (mean, std) = final_posterior(&obs, &fitted, cfg)?;
    let ok: Vec<usize> = (0..obs.x.len()).filter(|&i| obs.y[i].is_some()).collect();
    let ok_means: Vec<Objectives> = ok.iter().map(|&i| mean[i]).collect();
    let members = pareto_indices(&ok_means)
        .into_iter()
        .map(|k| {
            let i = ok[k];
            FrontMember {
                index: i,
                scheme: log[i].scheme.clone(),
                objectives: mean[i],
                observed: obs.y[i].expect("filtered to successes"),
                posterior_std: Some(std[i]),
            }
        })
        .collect();
    Ok(AmboRun {
        front: ParetoFront {
            provenance: Provenance::PosteriorMean,
            members,
        },
        log,
        posterior_mean: mean,
        posterior_std: std,
    })
}

/// Hypervolume of the raw-observation front after each evaluation, against
/// one fixed reference so that runs of different optimizers compare.
pub fn hypervolume_trace(log: &[RunRecord], reference: &Objectives) -> Vec<f64> {
    let mut pts: Vec<Objectives> = Vec::new();
    let mut out = Vec::with_capacity(log.len());
    let mut last = 0.0;
    for rec in log {
        if let Some(y) = rec.objectives {
            pts.push(y);
            last = hypervolume(&pts, reference);
        }
        out.push(last);
    }
    out
}
