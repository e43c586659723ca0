//! Plant, network and equipment parameters.

use serde::{Deserialize, Serialize};

use super::DispatchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraditionalGenerator {
    /// `[c1, c2, c3]` in $/MW²h, $/MWh, $/h.
    pub fuel: [f64; 3],
    pub p_min: f64,
    pub p_max: f64,
    /// MW per step.
    pub ramp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpGenerator {
    /// `[c1 .. c6]`: `c1 P² + c2 P + c3 + c4 H² + c5 H + c6 H P`.
    pub fuel: [f64; 6],
    pub c_vcd: f64,
    pub c_m: f64,
    pub c_cab: f64,
    /// Intercept of the back-pressure boundary `P ≥ c_m H + c_k`. When absent
    /// it is placed so both lower boundaries meet at `H = h_min`.
    #[serde(default)]
    pub c_k: Option<f64>,
    pub p_min: f64,
    pub p_max: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub ramp: f64,
}

impl ChpGenerator {
    pub fn c_k(&self) -> f64 {
        self.c_k
            .unwrap_or(self.p_min - (self.c_vcd + self.c_m) * self.h_min)
    }

    /// Whether `(p, h)` lies in the operating region within `tol`.
    pub fn region_contains(&self, p: f64, h: f64, tol: f64) -> bool {
        self.region_violation(p, h) <= tol
    }

    /// Largest violation of the region and box constraints at `(p, h)`.
    pub fn region_violation(&self, p: f64, h: f64) -> f64 {
        [
            self.p_min - self.c_vcd * h - p,
            self.c_m * h + self.c_k() - p,
            p - (self.p_max - self.c_cab * h),
            self.p_min - p,
            p - self.p_max,
            self.h_min - h,
            h - self.h_max,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatNetwork {
    /// Fraction of injected heat lost per step (λ).
    pub loss: f64,
    /// Transport delay in steps.
    pub delay: usize,
    pub e_min: f64,
    pub e_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectricBoilerSpec {
    /// $/MW rated.
    pub unit_price: f64,
    pub lifetime: u32,
    #[serde(default = "default_om_rate")]
    pub om_rate: f64,
    /// Heat out per electricity in.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatPumpSpec {
    pub unit_price: f64,
    pub lifetime: u32,
    #[serde(default = "default_om_rate")]
    pub om_rate: f64,
    pub cop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    /// $/MWh of capacity.
    pub unit_price: f64,
    pub lifetime: u32,
    #[serde(default = "default_om_rate")]
    pub om_rate: f64,
    /// Fraction of stored energy lost per step (η).
    pub self_discharge: f64,
    /// Auxiliary electricity per MW of heat moved in or out (ρ).
    #[serde(default = "default_aux_power")]
    pub aux_power: f64,
    /// Max charge per step as a fraction of capacity.
    pub charge_rate: f64,
    /// Max discharge per step as a fraction of capacity.
    pub discharge_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageHeaterSpec {
    #[serde(flatten)]
    pub storage: StorageSpec,
    /// Heater conversion (β).
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquipmentCatalog {
    pub eb: ElectricBoilerSpec,
    pub pump: HeatPumpSpec,
    pub tes: StorageSpec,
    pub csh: StorageHeaterSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ResFleet {
    pub wind_mw: f64,
    pub pv_mw: f64,
}

/// How many units of each candidate type the planner may size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSlots {
    pub eb: usize,
    pub pump: usize,
    pub tes: usize,
    pub csh: usize,
}

/// Upper bounds of the search box, per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub eb_mw: f64,
    pub pump_mw: f64,
    pub tes_mwh: f64,
    pub csh_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningSpace {
    pub slots: UnitSlots,
    pub bounds: SearchBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(default)]
    pub traditional: Vec<TraditionalGenerator>,
    #[serde(default)]
    pub chp: Vec<ChpGenerator>,
    pub network: HeatNetwork,
    /// $/MWh of electricity drawn by electric boilers.
    #[serde(default = "default_operating_price")]
    pub eb_operating_price: f64,
    /// $/MWh of electricity drawn by storage heaters.
    #[serde(default = "default_operating_price")]
    pub csh_operating_price: f64,
    pub equipment: EquipmentCatalog,
    pub interest_rate: f64,
    #[serde(default)]
    pub res: ResFleet,
    pub planning: PlanningSpace,
}

fn default_om_rate() -> f64 {
    0.02
}

fn default_aux_power() -> f64 {
    0.01
}

fn default_operating_price() -> f64 {
    2.0
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), DispatchError> {
    if cond {
        Ok(())
    } else {
        Err(DispatchError::InvalidConfig(msg.into()))
    }
}

fn in_unit_interval(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), DispatchError> {
        for (i, g) in self.traditional.iter().enumerate() {
            check(g.p_min <= g.p_max, format!("traditional[{i}]: p_min > p_max"))?;
            check(g.ramp >= 0.0, format!("traditional[{i}]: negative ramp"))?;
            check(g.fuel[0] >= 0.0, format!("traditional[{i}]: concave fuel cost"))?;
        }
        for (i, g) in self.chp.iter().enumerate() {
            check(g.p_min <= g.p_max, format!("chp[{i}]: p_min > p_max"))?;
            check(g.h_min <= g.h_max, format!("chp[{i}]: h_min > h_max"))?;
            check(g.ramp >= 0.0, format!("chp[{i}]: negative ramp"))?;
            let [c1, _, _, c4, _, c6] = g.fuel;
            check(
                c1 >= 0.0 && c4 >= 0.0 && 4.0 * c1 * c4 >= c6 * c6,
                format!("chp[{i}]: fuel cost is not convex"),
            )?;
        }
        let n = &self.network;
        check(n.loss >= 0.0 && n.loss < 1.0, "network loss must be in [0, 1)")?;
        check(n.e_min <= n.e_max, "network e_min > e_max")?;
        let eq = &self.equipment;
        check(in_unit_interval(eq.eb.beta), "eb beta must be in (0, 1]")?;
        check(eq.pump.cop >= 1.0, "pump COP must be ≥ 1")?;
        check(in_unit_interval(eq.csh.beta), "csh beta must be in (0, 1]")?;
        for (name, s) in [("tes", &eq.tes), ("csh", &eq.csh.storage)] {
            check(
                (0.0..1.0).contains(&s.self_discharge),
                format!("{name} self_discharge must be in [0, 1)"),
            )?;
            check(s.aux_power >= 0.0, format!("{name} aux_power must be ≥ 0"))?;
            check(
                s.charge_rate >= 0.0 && s.discharge_rate >= 0.0,
                format!("{name} rates must be ≥ 0"),
            )?;
        }
        for (name, life, price, om) in [
            ("eb", eq.eb.lifetime, eq.eb.unit_price, eq.eb.om_rate),
            ("pump", eq.pump.lifetime, eq.pump.unit_price, eq.pump.om_rate),
            ("tes", eq.tes.lifetime, eq.tes.unit_price, eq.tes.om_rate),
            ("csh", eq.csh.storage.lifetime, eq.csh.storage.unit_price, eq.csh.storage.om_rate),
        ] {
            check(life >= 1, format!("{name} lifetime must be ≥ 1 year"))?;
            check(price >= 0.0 && om >= 0.0, format!("{name} prices must be ≥ 0"))?;
        }
        check(self.interest_rate > 0.0, "interest rate must be > 0")?;
        check(
            self.eb_operating_price >= 0.0 && self.csh_operating_price >= 0.0,
            "operating prices must be ≥ 0",
        )?;
        check(self.res.wind_mw >= 0.0 && self.res.pv_mw >= 0.0, "RES fleet must be ≥ 0")?;
        let b = &self.planning.bounds;
        check(
            b.eb_mw >= 0.0 && b.pump_mw >= 0.0 && b.tes_mwh >= 0.0 && b.csh_mwh >= 0.0,
            "search bounds must be ≥ 0",
        )?;
        Ok(())
    }
}
