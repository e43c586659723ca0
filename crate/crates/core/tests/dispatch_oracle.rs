//! Four-step CHP + boiler instance checked against brute-force enumeration.

use thermoplan::dispatch::{check_constraints, simulate_day, CapacityScheme, DayStatus, HeatNetwork, SystemConfig, TypicalDay};
use thermoplan::solver::SolverSettings;
use thermoplan::synth::{generate_system, SystemScale};

const ELEC: [f64; 4] = [30.0, 35.0, 40.0, 32.0];
const HEAT: [f64; 4] = [30.0, 28.0, 25.0, 29.0];
const EB_MW: f64 = 20.0;
const GRID: f64 = 0.5;

fn instance() -> (SystemConfig, CapacityScheme, TypicalDay) {
    let mut cfg = generate_system(SystemScale::Small, 0);
    cfg.traditional.clear();
    cfg.chp.truncate(1);
    cfg.chp[0].ramp = 6.0;
    cfg.network = HeatNetwork { loss: 0.05, delay: 0, e_min: 0.0, e_max: 0.0 };
    cfg.res.wind_mw = 0.0;
    cfg.res.pv_mw = 0.0;
    cfg.planning.slots.eb = 1;
    cfg.planning.slots.pump = 0;
    cfg.planning.slots.tes = 0;
    cfg.planning.slots.csh = 0;
    let mut scheme = CapacityScheme::empty(&cfg);
    scheme.eb_rated[0] = EB_MW;
    let day = TypicalDay {
        electric_load: ELEC.to_vec(),
        heat_load: HEAT.to_vec(),
        wind_max: vec![0.0; 4],
        pv_max: vec![0.0; 4],
        weight: 1.0,
    };
    (cfg, scheme, day)
}

/// With no network storage, each boiler setting fixes the CHP point:
/// `P = load + P_eb` and `H = heat/(1−λ) − β P_eb`.
fn enumerate(cfg: &SystemConfig) -> f64 {
    let g = &cfg.chp[0];
    let beta = cfg.equipment.eb.beta;
    let keep = 1.0 - cfg.network.loss;
    let levels: Vec<f64> = (0..=(EB_MW / GRID) as usize).map(|k| k as f64 * GRID).collect();
    // Per step: (P_chp, cost) for every feasible boiler level.
    let options: Vec<Vec<(f64, f64)>> = (0..4)
        .map(|t| {
            levels
                .iter()
                .filter_map(|&e| {
                    let p = ELEC[t] + e;
                    let h = HEAT[t] / keep - beta * e;
                    let ok = h >= g.h_min - 1e-9
                        && h <= g.h_max + 1e-9
                        && p >= g.p_min - 1e-9
                        && p <= g.p_max + 1e-9
                        && p >= g.p_min - g.c_vcd * h - 1e-9
                        && p >= g.c_m * h + g.c_k() - 1e-9
                        && p <= g.p_max - g.c_cab * h + 1e-9;
                    let [c1, c2, c3, c4, c5, c6] = g.fuel;
                    let cost = c1 * p * p + c2 * p + c3 + c4 * h * h + c5 * h + c6 * h * p + cfg.eb_operating_price * e;
                    ok.then_some((p, cost))
                })
                .collect()
        })
        .collect();
    let ramp_ok = |a: f64, b: f64| (a - b).abs() <= g.ramp + 1e-9;
    let mut best = f64::INFINITY;
    for a in &options[0] {
        for b in options[1].iter().filter(|b| ramp_ok(a.0, b.0)) {
            for c in options[2].iter().filter(|c| ramp_ok(b.0, c.0)) {
                for d in options[3].iter().filter(|d| ramp_ok(c.0, d.0) && ramp_ok(d.0, a.0)) {
                    best = best.min(a.1 + b.1 + c.1 + d.1);
                }
            }
        }
    }
    best
}

#[test]
fn optimum_matches_grid_enumeration() {
    let (cfg, scheme, day) = instance();
    let brute = enumerate(&cfg);
    assert!(brute.is_finite(), "grid has no feasible point");
    let r = simulate_day(&cfg, &scheme, &day, &SolverSettings::default()).unwrap();
    assert_eq!(r.status, DayStatus::Optimal);
    // The grid is a subset of the feasible set, so it can only be worse.
    assert!(r.day_cost <= brute * (1.0 + 1e-9), "{} > {brute}", r.day_cost);
    assert!((brute - r.day_cost) / brute <= 0.005, "qp {} grid {brute}", r.day_cost);

    let s = r.schedules.unwrap();
    let report = check_constraints(&cfg, &scheme, &day, &s);
    assert!(report.max() <= 1e-6, "{report:?}");
    // The instance needs the boiler: the CHP alone cannot meet the heat.
    assert!(s.eb_p[0].iter().any(|p| *p > 1.0));
}
