//! Invariants of optimal dispatch on random days and schemes.

use proptest::prelude::*;
use thermoplan::dispatch::{check_constraints, simulate_day, CapacityScheme, DayStatus, SystemConfig, TypicalDay};
use thermoplan::solver::SolverSettings;
use thermoplan::synth::{generate_system, SystemScale};

fn system() -> SystemConfig {
    generate_system(SystemScale::Small, 0)
}

fn day_strategy() -> impl Strategy<Value = TypicalDay> {
    (
        prop::collection::vec(60.0..140.0f64, 24),
        prop::collection::vec(20.0..70.0f64, 24),
        prop::collection::vec(0.0..250.0f64, 24),
        0.0..40.0f64,
    )
        .prop_map(|(electric_load, heat_load, wind_max, pv_peak)| TypicalDay {
            electric_load,
            heat_load,
            wind_max,
            pv_max: (0..24)
                .map(|t| if (8..17).contains(&t) { pv_peak * (1.0 - ((t as f64 - 12.0) / 5.0).powi(2)) } else { 0.0 })
                .collect(),
            weight: 30.0,
        })
}

fn scheme_strategy() -> impl Strategy<Value = Vec<f64>> {
    (0.0..60.0f64, 0.0..20.0f64, 0.0..200.0f64, 0.0..60.0f64).prop_map(|(a, b, c, d)| vec![a, b, c, d])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn optimal_schedules_respect_the_model(day in day_strategy(), x in scheme_strategy()) {
        let cfg = system();
        let scheme = CapacityScheme::from_vector(&cfg, &x).unwrap();
        let r = simulate_day(&cfg, &scheme, &day, &SolverSettings::default()).unwrap();
        prop_assume!(r.status == DayStatus::Optimal);
        let s = r.schedules.unwrap();
        let peak = day.electric_load.iter().cloned().fold(0.0, f64::max);
        let rep = check_constraints(&cfg, &scheme, &day, &s);
        prop_assert!(rep.power_balance <= 1e-6 * peak, "{rep:?}");
        prop_assert!(rep.chp_region <= 1e-6, "{rep:?}");
        prop_assert!(rep.storage <= 1e-6 && rep.heat_network <= 1e-6, "{rep:?}");
        for t in 0..24 {
            prop_assert!(s.wind[t] >= -1e-6 && s.wind[t] <= day.wind_max[t] + 1e-6);
            prop_assert!(s.pv[t] >= -1e-6 && s.pv[t] <= day.pv_max[t] + 1e-6);
            prop_assert!(s.tes_q[0][t] >= -1e-6 && s.tes_q[0][t] <= x[2] + 1e-6);
            prop_assert!(s.csh_q[0][t] >= -1e-6 && s.csh_q[0][t] <= x[3] + 1e-6);
            prop_assert!(s.network_energy[t] >= cfg.network.e_min - 1e-6);
            prop_assert!(s.network_energy[t] <= cfg.network.e_max + 1e-6);
        }
        let res: f64 = s.wind.iter().chain(&s.pv).sum();
        prop_assert!((res - r.res_consumed).abs() <= 1e-9 * (1.0 + res));
    }

    #[test]
    fn larger_capacity_never_costs_more_to_run(
        day in day_strategy(),
        x in scheme_strategy(),
        which in 0usize..4,
        grow in 0.1..1.0f64,
    ) {
        let cfg = system();
        let settings = SolverSettings::default();
        let upper = [60.0, 20.0, 200.0, 60.0];
        let mut bigger = x.clone();
        bigger[which] += grow * (upper[which] - x[which]);
        let small = simulate_day(&cfg, &CapacityScheme::from_vector(&cfg, &x).unwrap(), &day, &settings).unwrap();
        let large = simulate_day(&cfg, &CapacityScheme::from_vector(&cfg, &bigger).unwrap(), &day, &settings).unwrap();
        prop_assume!(small.status == DayStatus::Optimal);
        prop_assert_eq!(large.status, DayStatus::Optimal);
        prop_assert!(
            large.day_cost <= small.day_cost + 1e-5 * small.day_cost.abs().max(1.0),
            "{} > {}", large.day_cost, small.day_cost
        );
    }
}
