//! Daily operation simulation and the two planning objectives.
//!
//! A capacity scheme is scored by dispatching every typical day as a convex
//! QP and summing weighted generation cost and consumed renewable energy,
//! then adding the annualized investment.

mod config;
mod eval;
mod model;

use serde::{Deserialize, Serialize};

pub use config::{
    ChpGenerator, ElectricBoilerSpec, EquipmentCatalog, HeatNetwork, HeatPumpSpec, PlanningSpace,
    ResFleet, SearchBounds, StorageHeaterSpec, StorageSpec, SystemConfig, TraditionalGenerator,
    UnitSlots,
};
pub use eval::{
    evaluate_scheme, simulate_day, DayStatus, DispatchResult, Evaluation, PenaltyTracker,
    DEFAULT_PENALTY_COST, PENALTY_MULTIPLIER,
};
pub use model::{
    build_day_problem, check_constraints, ConstraintReport, DayLayout, DayProblem, Schedules,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DispatchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid typical day: {0}")]
    InvalidDay(String),
    #[error("capital recovery needs a positive interest rate, got {0}")]
    NonPositiveRate(f64),
    #[error("capital recovery needs a lifetime of at least one year")]
    ZeroLifetime,
    #[error("capacity shortfall: {0}")]
    CapacityShortfall(String),
    #[error("no typical days supplied")]
    NoDays,
    #[error(transparent)]
    Solver(#[from] crate::solver::QpError),
}

/// Sizes of the candidate units: rated power in MW for boilers and pumps,
/// capacity in MWh for storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CapacityScheme {
    pub eb_rated: Vec<f64>,
    pub pump_rated: Vec<f64>,
    pub tes_capacity: Vec<f64>,
    pub csh_capacity: Vec<f64>,
}

impl CapacityScheme {
    /// All-zero scheme with the slot counts of `cfg`.
    pub fn empty(cfg: &SystemConfig) -> Self {
        let s = cfg.planning.slots;
        Self {
            eb_rated: vec![0.0; s.eb],
            pump_rated: vec![0.0; s.pump],
            tes_capacity: vec![0.0; s.tes],
            csh_capacity: vec![0.0; s.csh],
        }
    }

    /// Flattens as `[eb.., pump.., tes.., csh..]`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.eb_rated
            .iter()
            .chain(&self.pump_rated)
            .chain(&self.tes_capacity)
            .chain(&self.csh_capacity)
            .copied()
            .collect()
    }

    /// Inverse of [`CapacityScheme::to_vector`] for the slots of `cfg`.
    pub fn from_vector(cfg: &SystemConfig, v: &[f64]) -> Result<Self, DispatchError> {
        let s = cfg.planning.slots;
        if v.len() != s.eb + s.pump + s.tes + s.csh {
            return Err(DispatchError::InvalidScheme(format!(
                "expected {} entries, got {}",
                s.eb + s.pump + s.tes + s.csh,
                v.len()
            )));
        }
        let (eb, rest) = v.split_at(s.eb);
        let (pump, rest) = rest.split_at(s.pump);
        let (tes, csh) = rest.split_at(s.tes);
        Ok(Self {
            eb_rated: eb.to_vec(),
            pump_rated: pump.to_vec(),
            tes_capacity: tes.to_vec(),
            csh_capacity: csh.to_vec(),
        })
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<(), DispatchError> {
        let s = cfg.planning.slots;
        let b = cfg.planning.bounds;
        let groups = [
            ("eb", &self.eb_rated, s.eb, b.eb_mw),
            ("pump", &self.pump_rated, s.pump, b.pump_mw),
            ("tes", &self.tes_capacity, s.tes, b.tes_mwh),
            ("csh", &self.csh_capacity, s.csh, b.csh_mwh),
        ];
        for (name, vals, slots, upper) in groups {
            if vals.len() != slots {
                return Err(DispatchError::InvalidScheme(format!(
                    "{name}: {} entries for {slots} slots",
                    vals.len()
                )));
            }
            for &v in vals {
                // Small slack absorbs round-off from the unit-box mapping.
                if !(v >= 0.0 && v <= upper * (1.0 + 1e-12) + 1e-12) {
                    return Err(DispatchError::InvalidScheme(format!(
                        "{name} size {v} outside [0, {upper}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl SystemConfig {
    /// Box `[0, upper]` per entry of [`CapacityScheme::to_vector`].
    pub fn search_box(&self) -> Vec<(f64, f64)> {
        let s = self.planning.slots;
        let b = self.planning.bounds;
        std::iter::repeat_n(b.eb_mw, s.eb)
            .chain(std::iter::repeat_n(b.pump_mw, s.pump))
            .chain(std::iter::repeat_n(b.tes_mwh, s.tes))
            .chain(std::iter::repeat_n(b.csh_mwh, s.csh))
            .map(|u| (0.0, u))
            .collect()
    }
}

/// One representative day of hourly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalDay {
    pub electric_load: Vec<f64>,
    pub heat_load: Vec<f64>,
    pub wind_max: Vec<f64>,
    pub pv_max: Vec<f64>,
    /// Number of days this profile stands for (T_d).
    pub weight: f64,
}

impl TypicalDay {
    pub fn len(&self) -> usize {
        self.electric_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electric_load.is_empty()
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        let t = self.len();
        if t == 0 {
            return Err(DispatchError::InvalidDay("empty series".into()));
        }
        for (name, s) in [
            ("heat_load", &self.heat_load),
            ("wind_max", &self.wind_max),
            ("pv_max", &self.pv_max),
        ] {
            if s.len() != t {
                return Err(DispatchError::InvalidDay(format!(
                    "{name} has {} steps, electric_load has {t}",
                    s.len()
                )));
            }
        }
        let all = self
            .electric_load
            .iter()
            .chain(&self.heat_load)
            .chain(&self.wind_max)
            .chain(&self.pv_max);
        for &v in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DispatchError::InvalidDay(format!("negative or non-finite value {v}")));
            }
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(DispatchError::InvalidDay(format!("weight {} must be > 0", self.weight)));
        }
        Ok(())
    }
}

/// The two minimized planning objectives of one scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair {
    /// $ per year.
    pub annual_cost: f64,
    /// Negated consumed renewable energy, MWh per year.
    pub neg_res_consumed: f64,
}

impl ObjectivePair {
    pub fn as_array(&self) -> [f64; 2] {
        [self.annual_cost, self.neg_res_consumed]
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Self {
            annual_cost: v[0],
            neg_res_consumed: v[1],
        }
    }
}

/// `τ(1+τ)^T / ((1+τ)^T − 1)`
pub fn capital_recovery(rate: f64, lifetime: u32) -> Result<f64, DispatchError> {
    if !(rate > 0.0) {
        return Err(DispatchError::NonPositiveRate(rate));
    }
    if lifetime == 0 {
        return Err(DispatchError::ZeroLifetime);
    }
    if lifetime == 1 {
        return Ok(1.0 + rate);
    }
    let g = (1.0 + rate).powi(lifetime as i32);
    Ok(rate * g / (g - 1.0))
}

/// Annualized investment plus O&M in $ per year.
pub fn investment_cost(scheme: &CapacityScheme, cfg: &SystemConfig) -> Result<f64, DispatchError> {
    let eq = &cfg.equipment;
    let groups = [
        (&scheme.eb_rated, eq.eb.unit_price, eq.eb.lifetime, eq.eb.om_rate),
        (&scheme.pump_rated, eq.pump.unit_price, eq.pump.lifetime, eq.pump.om_rate),
        (&scheme.tes_capacity, eq.tes.unit_price, eq.tes.lifetime, eq.tes.om_rate),
        (
            &scheme.csh_capacity,
            eq.csh.storage.unit_price,
            eq.csh.storage.lifetime,
            eq.csh.storage.om_rate,
        ),
    ];
    let mut total = 0.0;
    for (sizes, price, life, om) in groups {
        let capital: f64 = sizes.iter().map(|s| s * price).sum();
        total += capital * capital_recovery(cfg.interest_rate, life)? + om * capital;
    }
    Ok(total)
}

/// Which candidate equipment types a planning study may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquipmentCase {
    /// Boiler, storage tank, heat pump and storage heater.
    All,
    EbTes,
    PumpCsh,
    EbOnly,
    TesOnly,
}

impl EquipmentCase {
    /// Numbered cases 1 to 5.
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::All),
            2 => Some(Self::EbTes),
            3 => Some(Self::PumpCsh),
            4 => Some(Self::EbOnly),
            5 => Some(Self::TesOnly),
            _ => None,
        }
    }

    /// `(eb, tes, pump, csh)` availability.
    pub fn allowed(self) -> (bool, bool, bool, bool) {
        match self {
            Self::All => (true, true, true, true),
            Self::EbTes => (true, true, false, false),
            Self::PumpCsh => (false, false, true, true),
            Self::EbOnly => (true, false, false, false),
            Self::TesOnly => (false, true, false, false),
        }
    }

    /// Zeroes the slot count of every disallowed type.
    pub fn apply(self, cfg: &SystemConfig) -> SystemConfig {
        let (eb, tes, pump, csh) = self.allowed();
        let mut out = cfg.clone();
        let s = &mut out.planning.slots;
        if !eb {
            s.eb = 0;
        }
        if !tes {
            s.tes = 0;
        }
        if !pump {
            s.pump = 0;
        }
        if !csh {
            s.csh = 0;
        }
        out
    }
}
