//! Comparison optimizers and the season-wide ground truth.
//!
//! [`saa_benchmark`] dispatches every day of a season instead of the
//! weighted typical days, which is what the surrogate-based estimates are
//! scored against in [`error_metrics`].

mod nsga2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nsga2::{crowding_distance, non_dominated_sort, nsga2_run, nsga2_run_with, Nsga2Config, Nsga2Run};

use crate::dispatch::{
    evaluate_scheme, investment_cost, simulate_day, CapacityScheme, DispatchError, ObjectivePair,
    PenaltyTracker, SystemConfig, TypicalDay,
};
use crate::moo::{derive_seed, from_unit, halton_points, pareto_filter, Evaluator, Objectives, ParetoFront, RunRecord};
use crate::scenario::SeasonData;
use crate::solver::SolverSettings;

/// Largest share of season days that may fail before the benchmark is void.
pub const MAX_INFEASIBLE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} season days could not be dispatched")]
    TooManyInfeasible { failed: usize, total: usize },
    #[error("estimate lists have different lengths: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Scores raw capacity vectors on a fixed set of typical days.
pub struct DispatchEvaluator<'a> {
    pub cfg: &'a SystemConfig,
    pub days: &'a [TypicalDay],
    pub tracker: PenaltyTracker,
    /// Evaluations that needed a penalty for at least one day.
    pub penalized: usize,
}

impl<'a> DispatchEvaluator<'a> {
    pub fn new(cfg: &'a SystemConfig, days: &'a [TypicalDay]) -> Self {
        Self {
            cfg,
            days,
            tracker: PenaltyTracker::default(),
            penalized: 0,
        }
    }
}

impl Evaluator for DispatchEvaluator<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Objectives, String> {
        let scheme = CapacityScheme::from_vector(self.cfg, x).map_err(|e| e.to_string())?;
        let ev = evaluate_scheme(self.cfg, &scheme, self.days, &mut self.tracker).map_err(|e| e.to_string())?;
        if ev.is_penalized() {
            self.penalized += 1;
        }
        Ok(ev.objectives.as_array())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomRun {
    pub front: ParetoFront,
    pub log: Vec<RunRecord>,
}

/// Evaluates `budget` quasi-random schemes. Runs with the same seed and a
/// larger budget evaluate a superset.
pub fn random_search(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    budget: usize,
    seed: u64,
) -> Result<RandomRun, BaselineError> {
    random_search_with(evaluator, bounds, budget, seed, &mut |_| {})
}

pub fn random_search_with(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    budget: usize,
    seed: u64,
    observer: &mut dyn FnMut(&RunRecord),
) -> Result<RandomRun, BaselineError> {
    if budget == 0 || bounds.is_empty() {
        return Err(BaselineError::Config("budget and dimension must be ≥ 1".into()));
    }
    let mut log = Vec::with_capacity(budget);
    for u in halton_points(budget, bounds.len(), derive_seed(seed, 0)) {
        let scheme = from_unit(&u, bounds);
        let (objectives, error) = match evaluator.evaluate(&scheme) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => (Some(y), None),
            Ok(y) => (None, Some(format!("non-finite objectives {y:?}"))),
            Err(e) => (None, Some(e)),
        };
        let rec = RunRecord {
            evaluation: log.len(),
            iteration: 0,
            scheme,
            objectives,
            error,
            ambo: None,
        };
        observer(&rec);
        log.push(rec);
    }
    let ok: Vec<&RunRecord> = log.iter().filter(|r| r.objectives.is_some()).collect();
    let schemes: Vec<Vec<f64>> = ok.iter().map(|r| r.scheme.clone()).collect();
    let ys: Vec<Objectives> = ok.iter().filter_map(|r| r.objectives).collect();
    let mut front = pareto_filter(&schemes, &ys);
    for m in &mut front.members {
        m.index = ok[m.index].evaluation;
    }
    Ok(RandomRun { front, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaResult {
    pub objectives: ObjectivePair,
    pub investment: f64,
    /// Season generation cost, $ per year.
    pub generation: f64,
    /// Season RES consumption, MWh per year.
    pub res_consumed: f64,
    pub days: usize,
    /// Season day indices left out of the averages.
    pub infeasible: Vec<usize>,
}

/// Dispatches every day of `season` with weight one, averages the feasible
/// days and scales the averages to the full season.
pub fn saa_benchmark(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    season: &SeasonData,
) -> Result<SaaResult, BaselineError> {
    if season.days.is_empty() {
        return Err(BaselineError::Config("season has no days".into()));
    }
    cfg.validate()?;
    scheme.validate(cfg)?;
    let investment = investment_cost(scheme, cfg)?;
    let settings = SolverSettings::default();
    let results = season
        .days
        .par_iter()
        .map(|d| {
            let day = TypicalDay {
                electric_load: d.electric_load.clone(),
                heat_load: d.heat_load.clone(),
                wind_max: d.wind_max.clone(),
                pv_max: d.pv_max.clone(),
                weight: 1.0,
            };
            simulate_day(cfg, scheme, &day, &settings)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total = results.len();
    let infeasible: Vec<usize> = (0..total).filter(|&i| !results[i].status.is_optimal()).collect();
    if infeasible.len() as f64 > MAX_INFEASIBLE_SHARE * total as f64 || infeasible.len() == total {
        return Err(BaselineError::TooManyInfeasible {
            failed: infeasible.len(),
            total,
        });
    }
    let ok = results.iter().filter(|r| r.status.is_optimal());
    let (mut cost, mut res) = (0.0, 0.0);
    for r in ok {
        cost += r.day_cost;
        res += r.res_consumed;
    }
    let feasible = (total - infeasible.len()) as f64;
    let generation = cost / feasible * total as f64;
    let res_consumed = res / feasible * total as f64;
    Ok(SaaResult {
        objectives: ObjectivePair {
            annual_cost: investment + generation,
            neg_res_consumed: -res_consumed,
        },
        investment,
        generation,
        res_consumed,
        days: total,
        infeasible,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveErrors {
    /// Mean relative absolute annual-cost error.
    pub ann: f64,
    /// Mean relative absolute RES error.
    pub res: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Final surrogate posterior means against the benchmark.
    pub posterior_mean: ObjectiveErrors,
    /// Raw typical-day evaluations against the benchmark.
    pub raw: ObjectiveErrors,
    pub schemes: usize,
    /// Per objective, schemes skipped because the benchmark value was zero.
    pub excluded: [usize; 2],
}

/// Mean of `|estimate − benchmark| / |benchmark|` over schemes, per
/// objective, for both estimators.
pub fn error_metrics(
    posterior_mean: &[Objectives],
    raw: &[Objectives],
    saa: &[Objectives],
) -> Result<ErrorReport, BaselineError> {
    if posterior_mean.len() != saa.len() || raw.len() != saa.len() {
        return Err(BaselineError::Mismatch(format!(
            "{} posterior means, {} raw values, {} benchmarks",
            posterior_mean.len(),
            raw.len(),
            saa.len()
        )));
    }
    if saa.is_empty() {
        return Err(BaselineError::Mismatch("no schemes".into()));
    }
    let mut excluded = [0usize; 2];
    let mut sums = [[0.0; 2]; 2];
    for k in 0..2 {
        let mut used = 0usize;
        for i in 0..saa.len() {
            let b = saa[i][k];
            if b == 0.0 {
                excluded[k] += 1;
                continue;
            }
            used += 1;
            sums[0][k] += (posterior_mean[i][k] - b).abs() / b.abs();
            sums[1][k] += (raw[i][k] - b).abs() / b.abs();
        }
        if excluded[k] > 0 {
            log::warn!("objective {k}: {} schemes with zero benchmark excluded", excluded[k]);
        }
        for s in &mut sums {
            s[k] = if used > 0 { s[k] / used as f64 } else { 0.0 };
        }
    }
    Ok(ErrorReport {
        posterior_mean: ObjectiveErrors {
            ann: sums[0][0],
            res: sums[0][1],
        },
        raw: ObjectiveErrors {
            ann: sums[1][0],
            res: sums[1][1],
        },
        schemes: saa.len(),
        excluded,
    })
}
