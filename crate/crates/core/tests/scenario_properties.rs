//! Moment matching, medoid choice and ordering on random data.

use proptest::prelude::*;
use thermoplan::scenario::{adjust_curve, generate_typical_scenarios, select_medoid, Series, SelectionMode};
use thermoplan::synth::{generate_season, SynthSpec};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

/// Exhaustive min-sum-distance search with its own standardization.
fn brute_medoid(rows: &[Vec<f64>]) -> usize {
    let d = rows[0].len();
    let cols: Vec<(f64, f64)> = (0..d)
        .map(|k| {
            let c: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (m, v) = mean_var(&c);
            (m, if v > 0.0 { v.sqrt() } else { 1.0 })
        })
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&cols).map(|(x, (m, s))| (x - m) / s).collect())
        .collect();
    let cost = |i: usize| -> f64 {
        z.iter()
            .map(|o| o.iter().zip(&z[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .sum()
    };
    let mut best = 0;
    for i in 1..z.len() {
        if cost(i) < cost(best) - 1e-12 {
            best = i;
        }
    }
    best
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..12).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 4), n))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn medoid_matches_exhaustive_search(rows in rows_strategy()) {
        prop_assert_eq!(select_medoid(&rows), brute_medoid(&rows));
    }

    #[test]
    fn medoid_ignores_affine_rescaling(
        rows in rows_strategy(),
        scale in prop::collection::vec(0.01..100.0f64, 4),
        shift in prop::collection::vec(-1e3..1e3f64, 4),
    ) {
        let moved: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(k, x)| scale[k] * x + shift[k]).collect())
            .collect();
        prop_assert_eq!(select_medoid(&rows), select_medoid(&moved));
    }

    #[test]
    fn adjustment_keeps_ranks(
        curve in prop::collection::vec(0.0..100.0f64, 24),
        a in 0.3..3.0f64,
        b in -20.0..20.0f64,
    ) {
        let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(hi - lo > 1e-3);
        // Targets produced by a known exponent are reachable by construction.
        let target: Vec<f64> = curve
            .iter()
            .map(|x| lo + (hi - lo) * ((1.0 + (x - lo) / (hi - lo)).powf(a) - 1.0) + b)
            .collect();
        let (tm, tv) = mean_var(&target);
        let adj = adjust_curve(&curve, tm, tv).unwrap();
        let (m, v) = mean_var(&adj.curve);
        prop_assert!((m - tm).abs() <= 1e-6 * tm.abs().max(1.0));
        prop_assert!((v - tv).abs() <= 1e-6 * tv);
        prop_assert!((adj.a - a).abs() <= 1e-6, "a {} vs {a}", adj.a);
        for i in 0..24 {
            for j in 0..24 {
                if curve[i] < curve[j] {
                    prop_assert!(adj.curve[i] < adj.curve[j]);
                }
            }
        }
    }
}

#[test]
fn quadrupled_variance_round_trip() {
    let curve = [1.0, 2.0, 4.0];
    let (m, v) = mean_var(&curve);
    let adj = adjust_curve(&curve, m, 4.0 * v).unwrap();
    assert!(adj.a > 1.0);
    // Forward-evaluate the transform with the recovered exponent.
    let fwd: Vec<f64> = curve
        .iter()
        .map(|x| 1.0 + 3.0 * ((1.0 + (x - 1.0) / 3.0).powf(adj.a) - 1.0) + adj.b)
        .collect();
    let (fm, fv) = mean_var(&fwd);
    assert!((fm - m).abs() < 1e-9 && (fv - 4.0 * v).abs() < 1e-6 * v);
    for (x, y) in fwd.iter().zip(&adj.curve) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn synthetic_months_match_pooled_moments() {
    for seed in [1, 2, 3] {
        let spec = SynthSpec { days: 90, seed, ..SynthSpec::small() };
        let season = generate_season(&spec).unwrap().season;
        let bundle = generate_typical_scenarios(&season, SelectionMode::Joint).unwrap();
        let total: f64 = bundle.scenarios.iter().map(|s| s.day.weight).sum();
        assert_eq!(total, 90.0);
        for sc in &bundle.scenarios {
            let month: Vec<_> = season.days.iter().filter(|d| d.month() == sc.month).collect();
            assert_eq!(sc.day.weight, month.len() as f64);
            for (k, s) in Series::ALL.into_iter().enumerate() {
                let pooled: Vec<f64> = month.iter().flat_map(|d| d.series(s).to_vec()).collect();
                let (tm, tv) = mean_var(&pooled);
                let got = match k {
                    0 => &sc.day.electric_load,
                    1 => &sc.day.heat_load,
                    2 => &sc.day.wind_max,
                    _ => &sc.day.pv_max,
                };
                assert!(sc.adjustments[k].adjusted, "seed {seed} month {} {s:?}", sc.month);
                let (m, v) = mean_var(got);
                assert!((m - tm).abs() <= 0.01 * tm, "seed {seed} month {} {s:?} mean {m} vs {tm}", sc.month);
                assert!((v - tv).abs() <= 0.01 * tv, "seed {seed} month {} {s:?} var {v} vs {tv}", sc.month);
                assert!(got.iter().all(|x| *x >= 0.0));
            }
        }
    }
}
