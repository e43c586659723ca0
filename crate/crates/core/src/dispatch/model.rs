//! QP formulation of one typical day.
//!
//! Variables are laid out time-major. Per step `t`:
//! traditional outputs, CHP (P, H) pairs, wind, PV, boiler (P, H), pump
//! (P, H), tank (in, out, Q), storage heater (P, in, out, Q), and the heat
//! network energy `E`. Storage and network states wrap around the day, so
//! `Q[-1] = Q[T-1]` and ramp limits also couple the last and first step.

use serde::{Deserialize, Serialize};

use super::{CapacityScheme, DispatchError, SystemConfig, TypicalDay};
use crate::solver::{QpBuilder, QuadraticProgram};

/// Index of every decision variable, `[unit][t]` or `[t]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DayLayout {
    pub steps: usize,
    pub tra: Vec<Vec<usize>>,
    pub chp_p: Vec<Vec<usize>>,
    pub chp_h: Vec<Vec<usize>>,
    pub wind: Option<Vec<usize>>,
    pub pv: Option<Vec<usize>>,
    pub eb_p: Vec<Vec<usize>>,
    pub eb_h: Vec<Vec<usize>>,
    pub pump_p: Vec<Vec<usize>>,
    pub pump_h: Vec<Vec<usize>>,
    pub tes_in: Vec<Vec<usize>>,
    pub tes_out: Vec<Vec<usize>>,
    pub tes_q: Vec<Vec<usize>>,
    pub csh_p: Vec<Vec<usize>>,
    pub csh_in: Vec<Vec<usize>>,
    pub csh_out: Vec<Vec<usize>>,
    pub csh_q: Vec<Vec<usize>>,
    pub energy: Option<Vec<usize>>,
}

/// Per-step values of every schedule, same shape as [`DayLayout`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub tra: Vec<Vec<f64>>,
    pub chp_p: Vec<Vec<f64>>,
    pub chp_h: Vec<Vec<f64>>,
    pub wind: Vec<f64>,
    pub pv: Vec<f64>,
    pub eb_p: Vec<Vec<f64>>,
    pub eb_h: Vec<Vec<f64>>,
    pub pump_p: Vec<Vec<f64>>,
    pub pump_h: Vec<Vec<f64>>,
    pub tes_in: Vec<Vec<f64>>,
    pub tes_out: Vec<Vec<f64>>,
    pub tes_q: Vec<Vec<f64>>,
    pub csh_p: Vec<Vec<f64>>,
    pub csh_in: Vec<Vec<f64>>,
    pub csh_out: Vec<Vec<f64>>,
    pub csh_q: Vec<Vec<f64>>,
    pub network_energy: Vec<f64>,
}

impl DayLayout {
    pub fn extract(&self, z: &[f64]) -> Schedules {
        let grid = |g: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
            g.iter().map(|u| u.iter().map(|&i| z[i]).collect()).collect()
        };
        let line = |l: &Option<Vec<usize>>| -> Vec<f64> {
            l.as_ref()
                .map_or_else(|| vec![0.0; self.steps], |v| v.iter().map(|&i| z[i]).collect())
        };
        Schedules {
            tra: grid(&self.tra),
            chp_p: grid(&self.chp_p),
            chp_h: grid(&self.chp_h),
            wind: line(&self.wind),
            pv: line(&self.pv),
            eb_p: grid(&self.eb_p),
            eb_h: grid(&self.eb_h),
            pump_p: grid(&self.pump_p),
            pump_h: grid(&self.pump_h),
            tes_in: grid(&self.tes_in),
            tes_out: grid(&self.tes_out),
            tes_q: grid(&self.tes_q),
            csh_p: grid(&self.csh_p),
            csh_in: grid(&self.csh_in),
            csh_out: grid(&self.csh_out),
            csh_q: grid(&self.csh_q),
            network_energy: line(&self.energy),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DayProblem {
    pub qp: QuadraticProgram,
    /// Fixed cost (`c3` terms, weighted) not represented in the QP.
    pub constant: f64,
    pub layout: DayLayout,
    pub weight: f64,
    /// Number of power-balance rows, which come first among the equalities.
    pub balance_rows: usize,
}

fn has_heat_side(cfg: &SystemConfig, scheme: &CapacityScheme) -> bool {
    !cfg.chp.is_empty()
        || !scheme.eb_rated.is_empty()
        || !scheme.pump_rated.is_empty()
        || !scheme.tes_capacity.is_empty()
        || !scheme.csh_capacity.is_empty()
}

/// Rejects days no dispatch could serve before a solve is attempted.
fn capacity_precheck(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    day: &TypicalDay,
) -> Result<(), DispatchError> {
    let eq = &cfg.equipment;
    let gen_max: f64 = cfg.traditional.iter().map(|g| g.p_max).sum::<f64>()
        + cfg.chp.iter().map(|g| g.p_max).sum::<f64>();
    for t in 0..day.len() {
        let res = if cfg.res.wind_mw > 0.0 { day.wind_max[t] } else { 0.0 }
            + if cfg.res.pv_mw > 0.0 { day.pv_max[t] } else { 0.0 };
        if day.electric_load[t] > gen_max + res + 1e-9 {
            return Err(DispatchError::CapacityShortfall(format!(
                "electric load {:.3} MW at step {t} exceeds available supply {:.3} MW",
                day.electric_load[t],
                gen_max + res
            )));
        }
    }

    let heat_demand: f64 = day.heat_load.iter().sum();
    if heat_demand <= 0.0 {
        return Ok(());
    }
    if !has_heat_side(cfg, scheme) {
        return Err(DispatchError::CapacityShortfall(
            "heat load present but no heat-producing unit configured".into(),
        ));
    }
    let csh = &eq.csh;
    let per_step: f64 = cfg.chp.iter().map(|g| g.h_max).sum::<f64>()
        + scheme.eb_rated.iter().map(|r| r * eq.eb.beta).sum::<f64>()
        + scheme.pump_rated.iter().map(|r| r * eq.pump.cop).sum::<f64>()
        + scheme
            .csh_capacity
            .iter()
            .map(|s| s * csh.storage.charge_rate.min(csh.storage.discharge_rate))
            .sum::<f64>();
    let supply = (1.0 - cfg.network.loss) * per_step * day.len() as f64;
    if heat_demand > supply + 1e-9 {
        return Err(DispatchError::CapacityShortfall(format!(
            "daily heat demand {heat_demand:.3} MWh exceeds deliverable heat {supply:.3} MWh"
        )));
    }
    Ok(())
}

/// Builds the day QP for `scheme`, with costs weighted by `day.weight`.
pub fn build_day_problem(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    day: &TypicalDay,
) -> Result<DayProblem, DispatchError> {
    cfg.validate()?;
    scheme.validate(cfg)?;
    day.validate()?;
    capacity_precheck(cfg, scheme, day)?;

    let steps = day.len();
    let w = day.weight;
    let eq = &cfg.equipment;
    let heat = has_heat_side(cfg, scheme);
    let mut b = QpBuilder::new();
    let mut lay = DayLayout {
        steps,
        tra: vec![Vec::with_capacity(steps); cfg.traditional.len()],
        chp_p: vec![Vec::with_capacity(steps); cfg.chp.len()],
        chp_h: vec![Vec::with_capacity(steps); cfg.chp.len()],
        wind: (cfg.res.wind_mw > 0.0).then(Vec::new),
        pv: (cfg.res.pv_mw > 0.0).then(Vec::new),
        eb_p: vec![Vec::new(); scheme.eb_rated.len()],
        eb_h: vec![Vec::new(); scheme.eb_rated.len()],
        pump_p: vec![Vec::new(); scheme.pump_rated.len()],
        pump_h: vec![Vec::new(); scheme.pump_rated.len()],
        tes_in: vec![Vec::new(); scheme.tes_capacity.len()],
        tes_out: vec![Vec::new(); scheme.tes_capacity.len()],
        tes_q: vec![Vec::new(); scheme.tes_capacity.len()],
        csh_p: vec![Vec::new(); scheme.csh_capacity.len()],
        csh_in: vec![Vec::new(); scheme.csh_capacity.len()],
        csh_out: vec![Vec::new(); scheme.csh_capacity.len()],
        csh_q: vec![Vec::new(); scheme.csh_capacity.len()],
        energy: heat.then(Vec::new),
    };

    let mut constant = 0.0;
    for _ in 0..steps {
        for (i, g) in cfg.traditional.iter().enumerate() {
            let v = b.add_var(w * g.fuel[1]);
            b.add_quadratic(v, v, w * g.fuel[0]);
            constant += w * g.fuel[2];
            lay.tra[i].push(v);
        }
        for (i, g) in cfg.chp.iter().enumerate() {
            let [c1, c2, c3, c4, c5, c6] = g.fuel;
            let p = b.add_var(w * c2);
            let h = b.add_var(w * c5);
            b.add_quadratic(p, p, w * c1);
            b.add_quadratic(h, h, w * c4);
            b.add_quadratic(p, h, w * c6);
            constant += w * c3;
            lay.chp_p[i].push(p);
            lay.chp_h[i].push(h);
        }
        if let Some(v) = lay.wind.as_mut() {
            v.push(b.add_var(0.0));
        }
        if let Some(v) = lay.pv.as_mut() {
            v.push(b.add_var(0.0));
        }
        for k in 0..scheme.eb_rated.len() {
            lay.eb_p[k].push(b.add_var(w * cfg.eb_operating_price));
            lay.eb_h[k].push(b.add_var(0.0));
        }
        for k in 0..scheme.pump_rated.len() {
            lay.pump_p[k].push(b.add_var(0.0));
            lay.pump_h[k].push(b.add_var(0.0));
        }
        for k in 0..scheme.tes_capacity.len() {
            lay.tes_in[k].push(b.add_var(0.0));
            lay.tes_out[k].push(b.add_var(0.0));
            lay.tes_q[k].push(b.add_var(0.0));
        }
        for k in 0..scheme.csh_capacity.len() {
            lay.csh_p[k].push(b.add_var(w * cfg.csh_operating_price));
            lay.csh_in[k].push(b.add_var(0.0));
            lay.csh_out[k].push(b.add_var(0.0));
            lay.csh_q[k].push(b.add_var(0.0));
        }
        if let Some(v) = lay.energy.as_mut() {
            v.push(b.add_var(0.0));
        }
    }

    let prev = |t: usize| (t + steps - 1) % steps;

    // Power balance.
    for t in 0..steps {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        terms.extend(lay.tra.iter().map(|u| (u[t], 1.0)));
        terms.extend(lay.chp_p.iter().map(|u| (u[t], 1.0)));
        if let Some(v) = &lay.wind {
            terms.push((v[t], 1.0));
        }
        if let Some(v) = &lay.pv {
            terms.push((v[t], 1.0));
        }
        terms.extend(lay.pump_p.iter().map(|u| (u[t], -1.0)));
        terms.extend(lay.eb_p.iter().map(|u| (u[t], -1.0)));
        let rho_tes = eq.tes.aux_power;
        for k in 0..lay.tes_in.len() {
            terms.push((lay.tes_in[k][t], -rho_tes));
            terms.push((lay.tes_out[k][t], -rho_tes));
        }
        let rho_csh = eq.csh.storage.aux_power;
        for k in 0..lay.csh_in.len() {
            terms.push((lay.csh_in[k][t], -rho_csh));
            terms.push((lay.csh_out[k][t], -rho_csh));
            terms.push((lay.csh_p[k][t], -1.0));
        }
        terms.retain(|&(_, c)| c != 0.0);
        b.add_eq(&terms, day.electric_load[t]);
    }
    let balance_rows = steps;

    // Heat network: E_t − E_{t−1} − (1−λ)·H_in,t = −H_load,(t+delay) mod T.
    if let Some(energy) = &lay.energy {
        let keep = 1.0 - cfg.network.loss;
        for t in 0..steps {
            let mut terms = vec![(energy[t], 1.0)];
            if steps > 1 {
                terms.push((energy[prev(t)], -1.0));
            }
            terms.extend(lay.chp_h.iter().map(|u| (u[t], -keep)));
            terms.extend(lay.pump_h.iter().map(|u| (u[t], -keep)));
            terms.extend(lay.eb_h.iter().map(|u| (u[t], -keep)));
            terms.extend(lay.tes_out.iter().map(|u| (u[t], -keep)));
            terms.extend(lay.tes_in.iter().map(|u| (u[t], keep)));
            terms.extend(lay.csh_out.iter().map(|u| (u[t], -keep)));
            let load = day.heat_load[(t + cfg.network.delay) % steps];
            b.add_eq(&terms, -load);
            b.add_bounds(energy[t], cfg.network.e_min, cfg.network.e_max);
        }
    }

    // Conversion links.
    for (k, _) in scheme.eb_rated.iter().enumerate() {
        for t in 0..steps {
            b.add_eq(&[(lay.eb_h[k][t], 1.0), (lay.eb_p[k][t], -eq.eb.beta)], 0.0);
        }
    }
    for (k, _) in scheme.pump_rated.iter().enumerate() {
        for t in 0..steps {
            b.add_eq(&[(lay.pump_h[k][t], 1.0), (lay.pump_p[k][t], -eq.pump.cop)], 0.0);
        }
    }
    for (k, _) in scheme.csh_capacity.iter().enumerate() {
        for t in 0..steps {
            b.add_eq(&[(lay.csh_in[k][t], 1.0), (lay.csh_p[k][t], -eq.csh.beta)], 0.0);
        }
    }

    // Storage dynamics: Q_t = (1−η)Q_{t−1} + in_t − out_t, cyclic.
    let storage = [
        (&lay.tes_q, &lay.tes_in, &lay.tes_out, &eq.tes),
        (&lay.csh_q, &lay.csh_in, &lay.csh_out, &eq.csh.storage),
    ];
    for (qs, ins, outs, spec) in storage {
        for k in 0..qs.len() {
            for t in 0..steps {
                let mut terms = vec![(qs[k][t], 1.0), (ins[k][t], -1.0), (outs[k][t], 1.0)];
                if steps > 1 {
                    terms.push((qs[k][prev(t)], -(1.0 - spec.self_discharge)));
                } else {
                    terms[0].1 = spec.self_discharge;
                }
                b.add_eq(&terms, 0.0);
            }
        }
    }

    // Generator limits, CHP region and ramps.
    for (i, g) in cfg.traditional.iter().enumerate() {
        for t in 0..steps {
            b.add_bounds(lay.tra[i][t], g.p_min, g.p_max);
            if steps > 1 && g.ramp < g.p_max - g.p_min {
                b.add_range(&[(lay.tra[i][t], 1.0), (lay.tra[i][prev(t)], -1.0)], -g.ramp, g.ramp);
            }
        }
    }
    for (i, g) in cfg.chp.iter().enumerate() {
        let c_k = g.c_k();
        for t in 0..steps {
            let (p, h) = (lay.chp_p[i][t], lay.chp_h[i][t]);
            b.add_bounds(p, g.p_min, g.p_max);
            b.add_bounds(h, g.h_min, g.h_max);
            b.add_range(&[(p, 1.0), (h, g.c_vcd)], g.p_min, f64::INFINITY);
            b.add_range(&[(p, 1.0), (h, -g.c_m)], c_k, f64::INFINITY);
            b.add_range(&[(p, 1.0), (h, g.c_cab)], f64::NEG_INFINITY, g.p_max);
            if steps > 1 && g.ramp < g.p_max - g.p_min {
                b.add_range(&[(p, 1.0), (lay.chp_p[i][prev(t)], -1.0)], -g.ramp, g.ramp);
            }
        }
    }

    // Renewables may be curtailed.
    for (series, avail) in [(&lay.wind, &day.wind_max), (&lay.pv, &day.pv_max)] {
        if let Some(v) = series {
            for t in 0..steps {
                b.add_bounds(v[t], 0.0, avail[t]);
            }
        }
    }

    // Candidate units.
    for (k, &rated) in scheme.eb_rated.iter().enumerate() {
        for t in 0..steps {
            b.add_bounds(lay.eb_p[k][t], 0.0, rated);
            b.add_bounds(lay.eb_h[k][t], 0.0, f64::INFINITY);
        }
    }
    for (k, &rated) in scheme.pump_rated.iter().enumerate() {
        for t in 0..steps {
            b.add_bounds(lay.pump_p[k][t], 0.0, rated);
            b.add_bounds(lay.pump_h[k][t], 0.0, f64::INFINITY);
        }
    }
    for (k, &cap) in scheme.tes_capacity.iter().enumerate() {
        for t in 0..steps {
            b.add_bounds(lay.tes_in[k][t], 0.0, eq.tes.charge_rate * cap);
            b.add_bounds(lay.tes_out[k][t], 0.0, eq.tes.discharge_rate * cap);
            b.add_bounds(lay.tes_q[k][t], 0.0, cap);
        }
    }
    let csh = &eq.csh.storage;
    for (k, &cap) in scheme.csh_capacity.iter().enumerate() {
        for t in 0..steps {
            b.add_bounds(lay.csh_p[k][t], 0.0, f64::INFINITY);
            b.add_bounds(lay.csh_in[k][t], 0.0, csh.charge_rate * cap);
            b.add_bounds(lay.csh_out[k][t], 0.0, csh.discharge_rate * cap);
            b.add_bounds(lay.csh_q[k][t], 0.0, cap);
        }
    }

    Ok(DayProblem {
        qp: b.build(),
        constant,
        layout: lay,
        weight: w,
        balance_rows,
    })
}

/// Largest violation of each constraint family for a schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub power_balance: f64,
    pub heat_network: f64,
    pub chp_region: f64,
    pub conversion: f64,
    pub storage: f64,
    pub bounds: f64,
    pub ramps: f64,
}

impl ConstraintReport {
    pub fn max(&self) -> f64 {
        [
            self.power_balance,
            self.heat_network,
            self.chp_region,
            self.conversion,
            self.storage,
            self.bounds,
            self.ramps,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Recomputes every model constraint directly from the schedules, without
/// going through the QP matrices.
pub fn check_constraints(
    cfg: &SystemConfig,
    scheme: &CapacityScheme,
    day: &TypicalDay,
    s: &Schedules,
) -> ConstraintReport {
    let steps = day.len();
    let eq = &cfg.equipment;
    let prev = |t: usize| (t + steps - 1) % steps;
    let below = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    let mut r = ConstraintReport::default();
    let sum_at = |g: &Vec<Vec<f64>>, t: usize| g.iter().map(|u| u[t]).sum::<f64>();

    for t in 0..steps {
        let supply = sum_at(&s.tra, t) + sum_at(&s.chp_p, t) + s.wind[t] + s.pv[t];
        let demand = day.electric_load[t]
            + sum_at(&s.pump_p, t)
            + sum_at(&s.eb_p, t)
            + eq.tes.aux_power * (sum_at(&s.tes_in, t) + sum_at(&s.tes_out, t))
            + eq.csh.storage.aux_power * (sum_at(&s.csh_in, t) + sum_at(&s.csh_out, t))
            + sum_at(&s.csh_p, t);
        r.power_balance = r.power_balance.max((supply - demand).abs());
    }

    if has_heat_side(cfg, scheme) {
        let keep = 1.0 - cfg.network.loss;
        for t in 0..steps {
            let h_in = sum_at(&s.chp_h, t)
                + sum_at(&s.pump_h, t)
                + sum_at(&s.eb_h, t)
                + sum_at(&s.tes_out, t)
                - sum_at(&s.tes_in, t)
                + sum_at(&s.csh_out, t);
            let e_prev = if steps > 1 { s.network_energy[prev(t)] } else { s.network_energy[t] };
            let load = day.heat_load[(t + cfg.network.delay) % steps];
            let resid = s.network_energy[t] - e_prev - keep * h_in + load;
            r.heat_network = r
                .heat_network
                .max(resid.abs())
                .max(below(s.network_energy[t], cfg.network.e_min, cfg.network.e_max));
        }
    }

    for (i, g) in cfg.chp.iter().enumerate() {
        for t in 0..steps {
            r.chp_region = r.chp_region.max(g.region_violation(s.chp_p[i][t], s.chp_h[i][t]));
            if steps > 1 {
                let d = s.chp_p[i][t] - s.chp_p[i][prev(t)];
                r.ramps = r.ramps.max(d.abs() - g.ramp);
            }
        }
    }
    for (i, g) in cfg.traditional.iter().enumerate() {
        for t in 0..steps {
            r.bounds = r.bounds.max(below(s.tra[i][t], g.p_min, g.p_max));
            if steps > 1 {
                let d = s.tra[i][t] - s.tra[i][prev(t)];
                r.ramps = r.ramps.max(d.abs() - g.ramp);
            }
        }
    }
    r.ramps = r.ramps.max(0.0);

    for t in 0..steps {
        let (wa, pa) = (
            if cfg.res.wind_mw > 0.0 { day.wind_max[t] } else { 0.0 },
            if cfg.res.pv_mw > 0.0 { day.pv_max[t] } else { 0.0 },
        );
        r.bounds = r.bounds.max(below(s.wind[t], 0.0, wa)).max(below(s.pv[t], 0.0, pa));
    }
    for (k, &rated) in scheme.eb_rated.iter().enumerate() {
        for t in 0..steps {
            r.bounds = r.bounds.max(below(s.eb_p[k][t], 0.0, rated));
            r.conversion = r.conversion.max((s.eb_h[k][t] - eq.eb.beta * s.eb_p[k][t]).abs());
        }
    }
    for (k, &rated) in scheme.pump_rated.iter().enumerate() {
        for t in 0..steps {
            r.bounds = r.bounds.max(below(s.pump_p[k][t], 0.0, rated));
            r.conversion = r
                .conversion
                .max((s.pump_h[k][t] - eq.pump.cop * s.pump_p[k][t]).abs());
        }
    }
    for (k, _) in scheme.csh_capacity.iter().enumerate() {
        for t in 0..steps {
            r.bounds = r.bounds.max(below(s.csh_p[k][t], 0.0, f64::INFINITY));
            r.conversion = r
                .conversion
                .max((s.csh_in[k][t] - eq.csh.beta * s.csh_p[k][t]).abs());
        }
    }
    let storage = [
        (&s.tes_q, &s.tes_in, &s.tes_out, &scheme.tes_capacity, &eq.tes),
        (&s.csh_q, &s.csh_in, &s.csh_out, &scheme.csh_capacity, &eq.csh.storage),
    ];
    for (qs, ins, outs, caps, spec) in storage {
        for k in 0..qs.len() {
            let cap = caps[k];
            for t in 0..steps {
                let q_prev = if steps > 1 { qs[k][prev(t)] } else { qs[k][t] };
                let resid = qs[k][t] - (1.0 - spec.self_discharge) * q_prev - ins[k][t] + outs[k][t];
                r.storage = r
                    .storage
                    .max(resid.abs())
                    .max(below(qs[k][t], 0.0, cap))
                    .max(below(ins[k][t], 0.0, spec.charge_rate * cap))
                    .max(below(outs[k][t], 0.0, spec.discharge_rate * cap));
            }
        }
    }
    r
}
