//! Day simulation and the scheme-level objectives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{build_day_problem, Schedules};
use super::{investment_cost, CapacityScheme, DispatchError, ObjectivePair, SystemConfig, TypicalDay};
use crate::solver::{solve_qp, QpStatus, SolverSettings};

/// An infeasible day costs this multiple of the largest feasible day cost.
pub const PENALTY_MULTIPLIER: f64 = 10.0;
/// Penalty day cost used before any feasible day has been seen.
pub const DEFAULT_PENALTY_COST: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayStatus {
    Optimal,
    /// Rejected by the capacity pre-check, never reached the solver.
    Shortfall,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl DayStatus {
    pub fn is_optimal(self) -> bool {
        self == Self::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub status: DayStatus,
    /// Generation cost of one day, $ (not multiplied by the weight).
    pub day_cost: f64,
    /// Dispatched wind plus PV over one day, MWh.
    pub res_consumed: f64,
    pub weight: f64,
    pub schedules: Option<Schedules>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl DispatchResult {
    fn failed(status: DayStatus, weight: f64) -> Self {
        Self {
            status,
            day_cost: 0.0,
            res_consumed: 0.0,
            weight,
            schedules: None,
            iterations: 0,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
        }
    }
}

/// Dispatches one typical day. A capacity shortfall is reported as a
/// [`DayStatus::Shortfall`] result; malformed inputs are errors.
pub fn simulate_day(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    day: &TypicalDay,
    settings: &SolverSettings,
) -> Result<DispatchResult, DispatchError> {
    let dp = match build_day_problem(cfg, scheme, day) {
        Ok(dp) => dp,
        Err(DispatchError::CapacityShortfall(msg)) => {
            log::debug!("day skipped: {msg}");
            return Ok(DispatchResult::failed(DayStatus::Shortfall, day.weight));
        }
        Err(e) => return Err(e),
    };
    let sol = solve_qp(&dp.qp, settings)?;
    let status = match sol.status {
        QpStatus::Optimal => DayStatus::Optimal,
        QpStatus::Infeasible => DayStatus::Infeasible,
        QpStatus::Unbounded => DayStatus::Unbounded,
        QpStatus::MaxIter => DayStatus::MaxIter,
    };
    let schedules = dp.layout.extract(&sol.z);
    let res_consumed = schedules.wind.iter().sum::<f64>() + schedules.pv.iter().sum::<f64>();
    Ok(DispatchResult {
        status,
        day_cost: (sol.objective + dp.constant) / dp.weight,
        res_consumed,
        weight: dp.weight,
        schedules: Some(schedules),
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
    })
}

/// Remembers the largest feasible weighted day cost across evaluations, so
/// penalties scale with the problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTracker {
    pub worst_feasible: Option<f64>,
}

impl PenaltyTracker {
    pub fn observe(&mut self, weighted_cost: f64) {
        if weighted_cost.is_finite() {
            self.worst_feasible = Some(self.worst_feasible.map_or(weighted_cost, |w| w.max(weighted_cost)));
        }
    }

    /// Weighted cost charged for an infeasible day.
    pub fn penalty(&self) -> f64 {
        self.worst_feasible
            .map_or(DEFAULT_PENALTY_COST, |w| PENALTY_MULTIPLIER * w.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: ObjectivePair,
    pub investment: f64,
    /// Weighted generation cost including penalties, $ per year.
    pub generation: f64,
    /// Weighted consumed RES, MWh per year.
    pub res_consumed: f64,
    pub days: Vec<DispatchResult>,
    /// Indices of days that were not solved to optimality.
    pub penalized_days: Vec<usize>,
}

impl Evaluation {
    pub fn is_penalized(&self) -> bool {
        !self.penalized_days.is_empty()
    }
}

/// Both planning objectives of `scheme` over `days`. Days are solved in
/// parallel and combined in input order, so the result is deterministic.
pub fn evaluate_scheme(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    days: &[TypicalDay],
    tracker: &mut PenaltyTracker,
) -> Result<Evaluation, DispatchError> {
    if days.is_empty() {
        return Err(DispatchError::NoDays);
    }
    cfg.validate()?;
    scheme.validate(cfg)?;
    let investment = investment_cost(scheme, cfg)?;
    let settings = SolverSettings::default();
    let results: Vec<DispatchResult> = days
        .par_iter()
        .map(|d| simulate_day(cfg, scheme, d, &settings))
        .collect::<Result<_, _>>()?;

    for r in results.iter().filter(|r| r.status.is_optimal()) {
        tracker.observe(r.weight * r.day_cost);
    }
    let mut generation = 0.0;
    let mut res = 0.0;
    let mut penalized_days = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if r.status.is_optimal() {
            generation += r.weight * r.day_cost;
            res += r.weight * r.res_consumed;
        } else {
            log::warn!("day {i} not solved ({:?}); applying penalty", r.status);
            generation += tracker.penalty();
            penalized_days.push(i);
        }
    }
    Ok(Evaluation {
        objectives: ObjectivePair {
            annual_cost: investment + generation,
            neg_res_consumed: -res,
        },
        investment,
        generation,
        res_consumed: res,
        days: results,
        penalized_days,
    })
}
