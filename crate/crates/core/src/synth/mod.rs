//! Synthetic heating seasons and reference systems.
//!
//! Generated data stands in for measured records. Reports built from it are
//! tagged with [`SYNTHETIC_TAG`].

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dispatch::{
    ChpGenerator, ElectricBoilerSpec, EquipmentCatalog, HeatNetwork, HeatPumpSpec, PlanningSpace,
    ResFleet, SearchBounds, StorageHeaterSpec, StorageSpec, SystemConfig, TraditionalGenerator,
    UnitSlots,
};
use crate::scenario::{DayRecord, SeasonData};

pub const SYNTHETIC_TAG: &str = "synthetic";
const STEPS: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid synthesis spec: {0}")]
pub struct SynthError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub days: usize,
    pub start: NaiveDate,
    pub seed: u64,
    pub peak_electric_mw: f64,
    pub peak_heat_mw: f64,
    pub wind_mw: f64,
    pub pv_mw: f64,
    /// Season-average outdoor temperature, °C.
    pub mean_temperature: f64,
    /// Depth of the mid-season cold trough, °C.
    pub seasonal_swing: f64,
    /// Half the day/night temperature range, °C.
    pub temperature_diurnal: f64,
    /// Std of the day-to-day weather anomaly, °C.
    pub temperature_noise: f64,
    /// Heat load at mean temperature, as a fraction of peak.
    pub heat_base: f64,
    /// Heat-load fraction gained per 10 °C of cooling.
    pub heat_coupling: f64,
    /// Electric load at night as a fraction of peak.
    pub electric_base: f64,
    pub weekend_factor: f64,
    /// Relative hourly noise on the electric load.
    pub load_noise: f64,
    /// Relative hourly noise on the heat load.
    pub heat_noise: f64,
    /// Innovation scale of the wind state; 0 gives constant output.
    pub wind_volatility: f64,
    /// Hour-to-hour autocorrelation of the wind state.
    pub wind_persistence: f64,
    /// Mean fraction of clear-sky PV removed by clouds.
    pub cloudiness: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::small()
    }
}

impl SynthSpec {
    /// Season sized for the small reference system.
    pub fn small() -> Self {
        Self {
            days: 180,
            start: NaiveDate::from_ymd_opt(2023, 11, 1).expect("valid date"),
            seed: 7,
            peak_electric_mw: 150.0,
            peak_heat_mw: 80.0,
            wind_mw: 250.0,
            pv_mw: 40.0,
            mean_temperature: -10.0,
            seasonal_swing: 8.0,
            temperature_diurnal: 4.0,
            temperature_noise: 3.0,
            heat_base: 0.75,
            heat_coupling: 0.2,
            electric_base: 0.68,
            weekend_factor: 0.95,
            load_noise: 0.03,
            heat_noise: 0.02,
            wind_volatility: 1.0,
            wind_persistence: 0.9,
            cloudiness: 0.5,
        }
    }

    /// Season sized for the large system.
    pub fn large() -> Self {
        Self {
            peak_electric_mw: 3600.0,
            peak_heat_mw: 1900.0,
            wind_mw: 6000.0,
            pv_mw: 900.0,
            ..Self::small()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(SynthError(msg.into())) };
        check(self.days >= 28, "at least 28 days are required")?;
        check(
            self.peak_electric_mw > 0.0 && self.peak_heat_mw > 0.0,
            "peak loads must be positive",
        )?;
        check(self.wind_mw >= 0.0 && self.pv_mw >= 0.0, "fleet sizes must be ≥ 0")?;
        let amps = [
            self.temperature_noise,
            self.load_noise,
            self.heat_noise,
            self.wind_volatility,
            self.seasonal_swing,
            self.temperature_diurnal,
            self.heat_coupling,
        ];
        check(amps.iter().all(|a| *a >= 0.0), "amplitudes must be ≥ 0")?;
        check((0.0..1.0).contains(&self.wind_persistence), "wind persistence must be in [0, 1)")?;
        check((0.0..=1.0).contains(&self.cloudiness), "cloudiness must be in [0, 1]")?;
        check(
            (0.0..=1.0).contains(&self.electric_base) && (0.0..=1.0).contains(&self.weekend_factor),
            "load fractions must be in [0, 1]",
        )?;
        Ok(())
    }
}

/// Morning and evening peaks over a flat night base, max 1.
fn electric_shape(base: f64, h: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
    (base + (1.0 - base) * (0.7 * bump(10.0, 3.0) + bump(19.0, 2.5))).min(1.0)
}

/// Clear-sky PV profile, zero outside 08:00–17:00.
pub fn pv_envelope(h: usize) -> f64 {
    const RISE: f64 = 7.5;
    const SET: f64 = 17.0;
    let t = h as f64;
    if t <= RISE || t >= SET {
        0.0
    } else {
        (std::f64::consts::PI * (t - RISE) / (SET - RISE)).sin()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Season together with the hourly temperature that drove the heat load.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeason {
    pub season: SeasonData,
    pub temperature: Vec<Vec<f64>>,
}

pub fn generate_season(spec: &SynthSpec) -> Result<SyntheticSeason, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let mut days = Vec::with_capacity(spec.days);
    let mut temperature = Vec::with_capacity(spec.days);
    let mut anomaly = 0.0;
    let mut wind_state = 0.0;
    let innovation = (1.0 - spec.wind_persistence.powi(2)).sqrt() * spec.wind_volatility;

    for d in 0..spec.days {
        let date = spec
            .start
            .checked_add_days(Days::new(d as u64))
            .ok_or_else(|| SynthError("date overflow".into()))?;
        anomaly = 0.7 * anomaly + 0.51_f64.sqrt() * spec.temperature_noise * normal(&mut rng);
        let trough = spec.seasonal_swing * (std::f64::consts::PI * (d as f64 + 0.5) / spec.days as f64).sin();
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let clear = 1.0 - spec.cloudiness * rng.random::<f64>();

        let mut rec = DayRecord {
            electric_load: Vec::with_capacity(STEPS),
            heat_load: Vec::with_capacity(STEPS),
            wind_max: Vec::with_capacity(STEPS),
            pv_max: Vec::with_capacity(STEPS),
            date,
        };
        let mut temps = Vec::with_capacity(STEPS);
        for h in 0..STEPS {
            let hf = h as f64;
            let diurnal = spec.temperature_diurnal
                * (2.0 * std::f64::consts::PI * (hf - 9.0) / 24.0).sin();
            let temp = spec.mean_temperature - trough + diurnal + anomaly;
            temps.push(temp);

            let heat = spec.heat_base - spec.heat_coupling * (temp - spec.mean_temperature) / 10.0
                + spec.heat_noise * normal(&mut rng);
            rec.heat_load.push(spec.peak_heat_mw * heat.clamp(0.05, 1.0));

            let week = if weekend { spec.weekend_factor } else { 1.0 };
            let elec = electric_shape(spec.electric_base, hf) * week
                * (1.0 + spec.load_noise * normal(&mut rng));
            rec.electric_load.push(spec.peak_electric_mw * elec.clamp(0.0, 1.0));

            wind_state = spec.wind_persistence * wind_state + innovation * normal(&mut rng);
            rec.wind_max.push(spec.wind_mw * logistic(wind_state));

            rec.pv_max.push(spec.pv_mw * pv_envelope(h) * clear);
        }
        days.push(rec);
        temperature.push(temps);
    }
    Ok(SyntheticSeason {
        season: SeasonData { days },
        temperature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemScale {
    /// Two CHP units and one conventional generator.
    Small,
    /// 53 CHP units and 32 conventional generators.
    Large,
}

const CHP_FUEL: [[f64; 6]; 2] = [
    [1.03, 32.74, 14.62, 0.58, 22.56, 0.15],
    [1.09, 38.80, 18.82, 0.61, 24.10, 0.16],
];
const CHP_REGION: [[f64; 3]; 2] = [[0.045, 0.75, 0.15], [0.03, 0.72, 0.2]];
const TRADITIONAL_FUEL: [f64; 3] = [2.44, 35.64, 11.54];
pub const LARGE_CHP_COUNT: usize = 53;
pub const LARGE_TRADITIONAL_COUNT: usize = 32;

fn chp(k: usize, p_max: f64, h_max: f64, ramp: f64) -> ChpGenerator {
    let [c_vcd, c_m, c_cab] = CHP_REGION[k];
    ChpGenerator {
        fuel: CHP_FUEL[k],
        c_vcd,
        c_m,
        c_cab,
        c_k: None,
        p_min: 10.0,
        p_max,
        h_min: 0.0,
        h_max,
        ramp,
    }
}

fn catalog() -> EquipmentCatalog {
    EquipmentCatalog {
        eb: ElectricBoilerSpec {
            unit_price: 300_000.0,
            lifetime: 25,
            om_rate: 0.02,
            beta: 0.95,
        },
        pump: HeatPumpSpec {
            unit_price: 3_000_000.0,
            lifetime: 15,
            om_rate: 0.02,
            cop: 4.0,
        },
        tes: StorageSpec {
            unit_price: 100_000.0,
            lifetime: 25,
            om_rate: 0.02,
            self_discharge: 0.01,
            aux_power: 0.01,
            charge_rate: 0.25,
            discharge_rate: 0.25,
        },
        csh: StorageHeaterSpec {
            storage: StorageSpec {
                unit_price: 50_000.0,
                lifetime: 15,
                om_rate: 0.02,
                self_discharge: 0.02,
                aux_power: 0.01,
                charge_rate: 0.25,
                discharge_rate: 0.25,
            },
            beta: 0.95,
        },
    }
}

/// Reference system. `seed` only affects the jitter of the large case.
pub fn generate_system(scale: SystemScale, seed: u64) -> SystemConfig {
    let small = SystemConfig {
        traditional: vec![TraditionalGenerator {
            fuel: TRADITIONAL_FUEL,
            p_min: 0.0,
            p_max: 80.0,
            ramp: 40.0,
        }],
        chp: vec![chp(0, 60.0, 60.0, 30.0), chp(1, 50.0, 50.0, 25.0)],
        network: HeatNetwork {
            loss: 0.05,
            delay: 2,
            e_min: 0.0,
            e_max: 40.0,
        },
        eb_operating_price: 2.0,
        csh_operating_price: 2.0,
        equipment: catalog(),
        interest_rate: 0.05,
        res: ResFleet {
            wind_mw: 250.0,
            pv_mw: 40.0,
        },
        planning: PlanningSpace {
            slots: UnitSlots {
                eb: 1,
                pump: 1,
                tes: 1,
                csh: 1,
            },
            bounds: SearchBounds {
                eb_mw: 60.0,
                pump_mw: 20.0,
                tes_mwh: 200.0,
                csh_mwh: 60.0,
            },
        },
    };
    match scale {
        SystemScale::Small => small,
        SystemScale::Large => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut jitter = |v: f64| v * rng.random_range(0.9..1.1);
            let chp_units = (0..LARGE_CHP_COUNT)
                .map(|i| {
                    let base = &small.chp[i % 2];
                    let mut g = base.clone();
                    for c in g.fuel.iter_mut() {
                        *c = jitter(*c);
                    }
                    // Keep the fuel cost convex after jitter.
                    g.fuel[5] = g.fuel[5].min(2.0 * (g.fuel[0] * g.fuel[3]).sqrt());
                    g.p_max = jitter(base.p_max);
                    g.h_max = jitter(base.h_max);
                    g
                })
                .collect();
            let traditional = (0..LARGE_TRADITIONAL_COUNT)
                .map(|_| {
                    let mut g = small.traditional[0].clone();
                    for c in g.fuel.iter_mut() {
                        *c = jitter(*c);
                    }
                    g.p_max = jitter(g.p_max);
                    g
                })
                .collect();
            let scale = 24.0;
            SystemConfig {
                traditional,
                chp: chp_units,
                network: HeatNetwork {
                    e_max: small.network.e_max * scale,
                    ..small.network
                },
                res: ResFleet {
                    wind_mw: 6000.0,
                    pv_mw: 900.0,
                },
                planning: PlanningSpace {
                    slots: UnitSlots {
                        eb: 2,
                        pump: 2,
                        tes: 2,
                        csh: 2,
                    },
                    bounds: SearchBounds {
                        eb_mw: 60.0 * scale / 2.0,
                        pump_mw: 20.0 * scale / 2.0,
                        tes_mwh: 200.0 * scale / 2.0,
                        csh_mwh: 60.0 * scale / 2.0,
                    },
                },
                ..small
            }
        }
    }
}
