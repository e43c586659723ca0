//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `DOCUMENTED_GAPS`.
//!
//! `ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde_json::Value;

use thermoplan::baselines::{nsga2_run, random_search, Nsga2Config};
use thermoplan::dispatch::{
    capital_recovery, check_constraints, simulate_day, CapacityScheme, DayStatus, HeatNetwork, SystemConfig,
    TypicalDay,
};
use thermoplan::gp::{
    estimate_noise_std, kernel_matrix, noise_gradient, robust_cholesky, CrossPrediction, GpError, GpModel,
    KernelParams, NoiseOptions, Smoothness, SurrogatePosterior,
};
use thermoplan::moo::{
    ambo_run, dominates, hypervolume, hypervolume_improvement, nehvi, AmboConfig, Objectives, ParetoFront, Surrogate,
};
use thermoplan::scenario::{generate_typical_scenarios, ScenarioBundle, SeasonData, SelectionMode, Series};
use thermoplan::solver::{solve_qp, verify_kkt, QpBuilder, QpStatus, QuadraticProgram, SolverSettings};
use thermoplan::synth::{generate_season, generate_system, SynthSpec, SystemScale};

/// Criteria expected to fail on this implementation, with the reason
/// recorded in the project notes.
const DOCUMENTED_GAPS: &[u32] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---------------------------------------------------------------- 1

fn capital_recovery_factor() -> Outcome {
    let crf = capital_recovery(0.05, 25).unwrap();
    let mut exact = true;
    for tau in [0.01, 0.03, 0.05, 0.08, 0.12] {
        exact &= capital_recovery(tau, 1).unwrap() == 1.0 + tau;
    }
    outcome(
        (crf - 0.0709525).abs() <= 1e-6 && exact,
        format!("CRF(0.05, 25) = {crf:.7}; T = 1 gives 1 + τ exactly: {exact}"),
    )
}

// ---------------------------------------------------------------- 2

fn random_qp(seed: u64) -> QuadraticProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=20);
    let rank = rng.random_range(0..=n);
    let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut b = QpBuilder::new();
    let vars: Vec<usize> = (0..n).map(|_| b.add_var(rng.random_range(-5.0..5.0))).collect();
    // P = FᵀF with a random rank, so singular Hessians are covered too.
    let f: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for i in 0..n {
        for j in i..n {
            let w: f64 = f.iter().map(|r| r[i] * r[j]).sum();
            if w != 0.0 {
                b.add_quadratic(vars[i], vars[j], if i == j { 0.5 * w } else { w });
            }
        }
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: f64 = a.iter().zip(&z0).map(|(x, y)| x * y).sum();
        b.add_eq(&vars.iter().map(|&v| (v, a[v])).collect::<Vec<_>>(), at);
    }
    for _ in 0..rng.random_range(0..=15) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: f64 = a.iter().zip(&z0).map(|(x, y)| x * y).sum();
        b.add_range(
            &vars.iter().map(|&v| (v, a[v])).collect::<Vec<_>>(),
            at - rng.random_range(0.0..1.0),
            at + rng.random_range(0.0..1.0),
        );
    }
    for &v in &vars {
        b.add_bounds(v, -10.0, 10.0);
    }
    b.build()
}

/// Best vertex of `{z : G z ≤ h}` over all n-subsets of active rows.
fn best_vertex(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> f64 {
    let n = c.len();
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, k| g[pick[r]][k]);
        let rhs = DVector::from_fn(n, |r, _| h[pick[r]]);
        if let Some(z) = a.lu().solve(&rhs) {
            let feasible = g
                .iter()
                .zip(h)
                .all(|(row, hi)| row.iter().zip(z.iter()).map(|(x, y)| x * y).sum::<f64>() <= hi + 1e-9);
            if feasible {
                best = best.min(c.iter().zip(z.iter()).map(|(x, y)| x * y).sum());
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if pick[k] < g.len() - n + k {
                pick[k] += 1;
                for j in k + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_lp(seed: u64) -> (QuadraticProgram, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4);
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mut g, mut h) = (Vec::new(), Vec::new());
    let mut b = QpBuilder::new();
    let vars: Vec<usize> = c.iter().map(|&ci| b.add_var(ci)).collect();
    for &v in &vars {
        b.add_bounds(v, -1.0, 1.0);
        let mut e = vec![0.0; n];
        e[v] = 1.0;
        g.push(e.clone());
        h.push(1.0);
        e[v] = -1.0;
        g.push(e);
        h.push(1.0);
    }
    for _ in 0..rng.random_range(1..=5) {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = rng.random_range(0.1..1.0);
        b.add_range(&vars.iter().map(|&v| (v, a[v])).collect::<Vec<_>>(), f64::NEG_INFINITY, rhs);
        g.push(a);
        h.push(rhs);
    }
    (b.build(), best_vertex(&c, &g, &h))
}

fn qp_solver() -> Outcome {
    let settings = SolverSettings::default();
    let mut worst_kkt = 0.0f64;
    let mut bad = Vec::new();
    for seed in 0..100 {
        let p = random_qp(7_000 + seed);
        let s = solve_qp(&p, &settings).unwrap();
        let r = verify_kkt(&p, &s, 1e-6);
        worst_kkt = worst_kkt.max(r.max());
        if s.status != QpStatus::Optimal || !r.within(1e-6) {
            bad.push(seed);
        }
    }
    let mut worst_lp = 0.0f64;
    for seed in 0..20 {
        let (p, opt) = random_lp(9_000 + seed);
        let s = solve_qp(&p, &settings).unwrap();
        let e = (s.objective - opt).abs() / opt.abs().max(1.0);
        worst_lp = worst_lp.max(e);
        if s.status != QpStatus::Optimal || e > 1e-6 {
            bad.push(1000 + seed);
        }
    }
    outcome(
        bad.is_empty(),
        format!("worst KKT residual {worst_kkt:.2e} over 100 QPs; worst LP relative gap {worst_lp:.2e} over 20 LPs"),
    )
}

// ---------------------------------------------------------------- 3

const ELEC: [f64; 4] = [30.0, 35.0, 40.0, 32.0];
const HEAT: [f64; 4] = [30.0, 28.0, 25.0, 29.0];
const EB_MW: f64 = 20.0;

fn chp_boiler_instance() -> (SystemConfig, CapacityScheme, TypicalDay) {
    let mut cfg = generate_system(SystemScale::Small, 0);
    cfg.traditional.clear();
    cfg.chp.truncate(1);
    cfg.chp[0].ramp = 6.0;
    cfg.network = HeatNetwork {
        loss: 0.05,
        delay: 0,
        e_min: 0.0,
        e_max: 0.0,
    };
    cfg.res.wind_mw = 0.0;
    cfg.res.pv_mw = 0.0;
    let s = &mut cfg.planning.slots;
    (s.eb, s.pump, s.tes, s.csh) = (1, 0, 0, 0);
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

/// Exhaustive search over boiler power on a 0.5 MW grid. Without network
/// storage the boiler level fixes the CHP point of every hour.
fn grid_optimum(cfg: &SystemConfig) -> f64 {
    let g = &cfg.chp[0];
    let beta = cfg.equipment.eb.beta;
    let keep = 1.0 - cfg.network.loss;
    let per_hour: Vec<Vec<(f64, f64)>> = (0..4)
        .map(|t| {
            (0..=40)
                .filter_map(|k| {
                    let e = 0.5 * k as f64;
                    let p = ELEC[t] + e;
                    let h = HEAT[t] / keep - beta * e;
                    let tol = 1e-9;
                    let ok = h >= g.h_min - tol
                        && h <= g.h_max + tol
                        && p >= g.p_min - tol
                        && p <= g.p_max + tol
                        && p >= g.p_min - g.c_vcd * h - tol
                        && p >= g.c_m * h + g.c_k() - tol
                        && p <= g.p_max - g.c_cab * h + tol;
                    let [a, b, c, d, e2, f] = g.fuel;
                    let cost = a * p * p + b * p + c + d * h * h + e2 * h + f * h * p + cfg.eb_operating_price * e;
                    ok.then_some((p, cost))
                })
                .collect()
        })
        .collect();
    let ramp = |x: f64, y: f64| (x - y).abs() <= g.ramp + 1e-9;
    let mut best = f64::INFINITY;
    for a in &per_hour[0] {
        for b in per_hour[1].iter().filter(|b| ramp(a.0, b.0)) {
            for c in per_hour[2].iter().filter(|c| ramp(b.0, c.0)) {
                for d in per_hour[3].iter().filter(|d| ramp(c.0, d.0) && ramp(d.0, a.0)) {
                    best = best.min(a.1 + b.1 + c.1 + d.1);
                }
            }
        }
    }
    best
}

fn dispatch_oracle() -> Outcome {
    let (cfg, scheme, day) = chp_boiler_instance();
    let grid = grid_optimum(&cfg);
    let r = simulate_day(&cfg, &scheme, &day, &SolverSettings::default()).unwrap();
    if r.status != DayStatus::Optimal || !grid.is_finite() {
        return outcome(false, format!("status {:?}, grid optimum {grid}", r.status));
    }
    let gap = (r.day_cost - grid) / grid;
    let residual = check_constraints(&cfg, &scheme, &day, r.schedules.as_ref().unwrap()).max();
    outcome(
        gap.abs() <= 0.005 && residual <= 1e-6,
        format!("QP {:.4} vs grid {grid:.4} (gap {:.3}%); max constraint residual {residual:.2e}", r.day_cost, 100.0 * gap),
    )
}

// ---------------------------------------------------------------- 4

fn gp_correctness() -> Outcome {
    // Two points, exponential kernel with unit scales.
    let (sn, y1, y2) = (0.1, 0.7, -0.4);
    let p = KernelParams::isotropic(1.0, Smoothness::Half, 1.0, 1);
    let m = GpModel::new(vec![vec![0.0], vec![1.0]], vec![y1, y2], p, sn).unwrap();
    let a = 1.0 + sn * sn;
    let b = (-1.0f64).exp();
    let det = a * a - b * b;
    let k = (-0.5f64).exp();
    let w = [(a * k - b * k) / det, (a * k - b * k) / det];
    let post = m.posterior(&[vec![0.5]]).unwrap();
    let quad = (a * y1 * y1 - 2.0 * b * y1 * y2 + a * y2 * y2) / det;
    let mll = -0.5 * quad - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln();
    let hand = [
        (post.mean[0] - (w[0] * y1 + w[1] * y2)).abs(),
        (post.cov[(0, 0)] - (1.0 - w[0] * k - w[1] * k)).abs(),
        (m.log_marginal_likelihood() - mll).abs(),
    ];
    let hand_err = hand.iter().cloned().fold(0.0, f64::max);

    // Gradient in σ_n² against central differences.
    let params = KernelParams::isotropic(1.3, Smoothness::FiveHalves, 0.3, 1);
    let (x, y) = gp_sample(15, &params, 0.2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_grad = 0.0f64;
    for _ in 0..10 {
        let s: f64 = rng.random_range(0.02..1.0);
        let g = noise_gradient(&GpModel::new(x.clone(), y.clone(), params.clone(), s).unwrap());
        let v = s * s;
        let h = 1e-5 * v;
        let at = |v: f64| {
            GpModel::new(x.clone(), y.clone(), params.clone(), v.sqrt())
                .unwrap()
                .log_marginal_likelihood()
        };
        let fd = (at(v + h) - at(v - h)) / (2.0 * h);
        worst_grad = worst_grad.max((g - fd).abs() / fd.abs().max(1e-8));
    }

    let truth = KernelParams::isotropic(1.0, Smoothness::FiveHalves, 0.2, 1);
    let (x, y) = gp_sample(60, &truth, 0.1, 0);
    let est = estimate_noise_std(&x, &y, &truth, &NoiseOptions::default()).unwrap();
    outcome(
        hand_err <= 1e-10 && worst_grad <= 1e-4 && (0.05..=0.2).contains(&est.noise_std),
        format!(
            "two-point error {hand_err:.1e}; worst gradient error {worst_grad:.1e}; recovered σ_n {:.4}",
            est.noise_std
        ),
    )
}

/// Prior draw of the GP on `n` uniform points plus Gaussian noise.
fn gp_sample(n: usize, p: &KernelParams, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
    let (chol, _) = robust_cholesky(&kernel_matrix(&x, &x, p)).unwrap();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let f = chol.l() * z;
    let y = f
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + noise * e
        })
        .collect();
    (x, y)
}

// ---------------------------------------------------------------- 5

/// Area of the union of boxes `[p, r]` over a compressed coordinate grid.
fn rectangle_union(points: &[Objectives], r: &Objectives) -> f64 {
    let inner: Vec<&Objectives> = points.iter().filter(|q| q[0] < r[0] && q[1] < r[1]).collect();
    let mut xs: Vec<f64> = inner.iter().map(|q| q[0]).chain([r[0]]).collect();
    let mut ys: Vec<f64> = inner.iter().map(|q| q[1]).chain([r[1]]).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            if inner.iter().any(|q| q[0] <= xs[i] && q[1] <= ys[j]) {
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
            }
        }
    }
    area
}

fn hypervolume_checks() -> Outcome {
    // Every front of up to 8 points on a small rational grid, sampled
    // exhaustively by size and densely by content.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = [1.0, 1.0];
    let mut worst = 0.0f64;
    let mut fronts = 0;
    for size in 1..=8 {
        for _ in 0..2_000 {
            let pts: Vec<Objectives> = (0..size)
                .map(|_| [rng.random_range(0..=8) as f64 / 8.0, rng.random_range(0..=8) as f64 / 8.0])
                .collect();
            worst = worst.max((hypervolume(&pts, &r) - rectangle_union(&pts, &r)).abs());
            fronts += 1;
        }
    }

    let mut z_max = 0.0f64;
    let samples = 1_000_000;
    for f in 0..20 {
        let n = rng.random_range(1..=10);
        let pts: Vec<Objectives> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let exact = hypervolume(&pts, &r);
        let mut mc = ChaCha8Rng::seed_from_u64(100 + f);
        let hits = (0..samples)
            .filter(|_| {
                let u = [mc.random::<f64>(), mc.random::<f64>()];
                pts.iter().any(|p| p[0] <= u[0] && p[1] <= u[1])
            })
            .count();
        let phat = hits as f64 / samples as f64;
        let se = (phat * (1.0 - phat) / samples as f64).sqrt().max(1e-12);
        z_max = z_max.max((phat - exact).abs() / se);
    }
    outcome(
        worst <= 1e-9 && z_max <= 3.0,
        format!("{fronts} grid fronts, worst gap {worst:.1e}; Monte Carlo worst deviation {z_max:.2} standard errors"),
    )
}

// ---------------------------------------------------------------- 6

struct Exact {
    x: Vec<Vec<f64>>,
    f: fn(&[f64]) -> f64,
}

impl Surrogate for Exact {
    fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    fn posterior(&self, q: &[Vec<f64>]) -> Result<SurrogatePosterior, GpError> {
        Ok(SurrogatePosterior {
            mean: q.iter().map(|v| (self.f)(v)).collect(),
            cov: DMatrix::zeros(q.len(), q.len()),
        })
    }

    fn predict_with_cross(&self, x: &[f64]) -> Result<CrossPrediction, GpError> {
        Ok(CrossPrediction {
            mean: (self.f)(x),
            variance: 0.0,
            cross: DVector::zeros(self.x.len()),
        })
    }
}

fn nehvi_degeneracy() -> Outcome {
    fn f1(x: &[f64]) -> f64 {
        x[0] + 0.3 * x[1]
    }
    fn f2(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 0.5 * x[1]
    }
    fn dominated(x: &[f64]) -> f64 {
        3.0 + x[0]
    }
    let observed = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.5]];
    let a = Exact {
        x: observed.clone(),
        f: f1,
    };
    let b = Exact {
        x: observed.clone(),
        f: f2,
    };
    let front: Vec<Objectives> = observed.iter().map(|x| [f1(x), f2(x)]).collect();
    let r = [2.0, 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let v = nehvi(&x, [&a, &b], r, 32, i).unwrap();
        worst = worst.max((v - hypervolume_improvement(&[f1(&x), f2(&x)], &front, &r)).abs());
    }
    let c = Exact {
        x: observed,
        f: dominated,
    };
    let zeros = (0..50).all(|i| {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        nehvi(&x, [&a, &c], r, 32, i).unwrap() == 0.0
    });
    outcome(
        worst <= 1e-9 && zeros,
        format!("worst |NEHVI − HVI| {worst:.1e} over 200 points; dominated points score 0: {zeros}"),
    )
}

// ---------------------------------------------------------------- 7

fn toy(x: &[f64]) -> Objectives {
    [x[0] * x[0], (x[0] - 2.0).powi(2)]
}

fn noisy_toy(seed: u64) -> impl FnMut(&[f64]) -> Result<Objectives, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    move |x: &[f64]| {
        let y = toy(x);
        Ok([y[0] + noise.sample(&mut rng), y[1] + noise.sample(&mut rng)])
    }
}

fn ambo_vs_baselines() -> Outcome {
    let r = [5.0, 5.0];
    let bounds = [(-1.0, 3.0)];
    // Each front is scored by the noiseless objectives of the schemes it
    // recommends.
    let score = |front: &ParetoFront| {
        let pts: Vec<Objectives> = front.members.iter().map(|m| toy(&m.scheme)).collect();
        hypervolume(&pts, &r)
    };
    let (mut wins_nsga, mut wins_random, mut literal) = (0, 0, 0);
    let mut rows = Vec::new();
    for seed in 0..10u64 {
        let cfg = AmboConfig {
            seed,
            ..AmboConfig::default()
        }
        .with_budget(60, 1);
        let a = ambo_run(&mut noisy_toy(3 * seed + 1), &bounds, &cfg).unwrap();
        let ncfg = Nsga2Config {
            seed,
            ..Nsga2Config::default()
        }
        .with_budget(60);
        let n = nsga2_run(&mut noisy_toy(3 * seed + 2), &bounds, &ncfg).unwrap();
        let rs = random_search(&mut noisy_toy(3 * seed + 3), &bounds, 60, seed).unwrap();
        let (ha, hn, hr) = (score(&a.front), score(&n.front), score(&rs.front));
        wins_nsga += usize::from(ha >= hn);
        wins_random += usize::from(ha >= hr);
        // The same comparison on the reported objective values.
        let reported = |f: &ParetoFront| hypervolume(&f.objectives(), &r);
        literal += usize::from(reported(&a.front) >= reported(&n.front) && reported(&a.front) >= reported(&rs.front));
        rows.push(format!("{ha:.3}/{hn:.3}/{hr:.3}"));
    }
    outcome(
        wins_nsga >= 8 && wins_random >= 8,
        format!(
            "AMBO ≥ NSGA-II in {wins_nsga}/10, ≥ random in {wins_random}/10 (true-objective HV, r = (5, 5)); \
             on reported values {literal}/10; per seed {}",
            rows.join(" ")
        ),
    )
}

// ---------------------------------------------------------------- CLI helpers

fn thermoplan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_thermoplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = thermoplan(args);
    assert!(
        out.status.success(),
        "thermoplan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_plan(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// ---------------------------------------------------------------- 8

fn noise_handling() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        "plan.toml",
        "budget = 40\nseed = 0\n[system]\npreset = \"small\"\n[scenarios.synthetic]\ndays = 180\n",
    );
    let run = dir.path().join("run");
    run_ok(&["plan", "--config", s(&plan), "--out", s(&run)]);
    run_ok(&["benchmark", "--run", s(&run)]);
    let rep = read_json(&run.join("error_report.json"));
    let get = |a: &str, b: &str| rep[a][b].as_f64().unwrap();
    let (pm_res, raw_res, raw_ann) = (get("posterior_mean", "res"), get("raw", "res"), get("raw", "ann"));
    let schemes = rep["schemes"].as_u64().unwrap();
    outcome(
        pm_res < raw_res && raw_ann <= 0.03 && schemes == 40,
        format!(
            "{schemes} schemes on {} days: RES error posterior mean {pm_res:.6} vs raw {raw_res:.6}; \
             raw annual-cost error {:.2}%",
            rep["season_days"],
            100.0 * raw_ann
        ),
    )
}

// ---------------------------------------------------------------- 9

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Index minimizing the summed Euclidean distance after z-scoring columns.
fn brute_medoid(rows: &[Vec<f64>]) -> usize {
    let d = rows[0].len();
    let scale: Vec<(f64, f64)> = (0..d)
        .map(|k| {
            let (m, v) = moments(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
            (m, if v > 0.0 { v.sqrt() } else { 1.0 })
        })
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&scale).map(|(x, (m, s))| (x - m) / s).collect())
        .collect();
    let total = |i: usize| -> f64 {
        z.iter()
            .map(|o| o.iter().zip(&z[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .sum()
    };
    (1..z.len()).fold(0, |best, i| if total(i) < total(best) - 1e-12 { i } else { best })
}

fn series_of(day: &TypicalDay, s: Series) -> &[f64] {
    match s {
        Series::Electric => &day.electric_load,
        Series::Heat => &day.heat_load,
        Series::Wind => &day.wind_max,
        Series::Pv => &day.pv_max,
    }
}

fn check_bundle(season: &SeasonData, bundle: &ScenarioBundle, mode: SelectionMode) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut medoid_misses = 0;
    for sc in &bundle.scenarios {
        let idx: Vec<usize> = (0..season.days.len())
            .filter(|&i| season.days[i].month() == sc.month)
            .collect();
        for (k, s) in Series::ALL.into_iter().enumerate() {
            let pooled: Vec<f64> = idx.iter().flat_map(|&i| season.days[i].series(s).to_vec()).collect();
            let (tm, tv) = moments(&pooled);
            let (m, v) = moments(series_of(&sc.day, s));
            worst = worst.max(rel(m, tm)).max(rel(v, tv));

            let features: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let d = &season.days[i];
                    match mode {
                        SelectionMode::Joint => {
                            let net: Vec<f64> = (0..d.electric_load.len())
                                .map(|t| d.electric_load[t] - d.wind_max[t] - d.pv_max[t])
                                .collect();
                            let (hm, hv) = moments(&d.heat_load);
                            let (nm, nv) = moments(&net);
                            vec![hm, hv, nm, nv]
                        }
                        SelectionMode::Independent => {
                            let (a, b) = moments(d.series(s));
                            vec![a, b]
                        }
                    }
                })
                .collect();
            if idx[brute_medoid(&features)] != sc.adjustments[k].source_day {
                medoid_misses += 1;
            }
        }
    }
    (worst, medoid_misses)
}

fn scenario_moments() -> Outcome {
    let season = generate_season(&SynthSpec::small()).unwrap().season;
    let mut worst = 0.0f64;
    let mut misses = 0;
    let mut days = 0;
    for mode in [SelectionMode::Joint, SelectionMode::Independent] {
        let bundle = generate_typical_scenarios(&season, mode).unwrap();
        days += bundle.scenarios.len();
        let (w, m) = check_bundle(&season, &bundle, mode);
        worst = worst.max(w);
        misses += m;
    }
    outcome(
        worst <= 0.01 && misses == 0,
        format!("{days} typical days over both selection modes; worst relative moment error {worst:.2e}; medoid mismatches {misses}"),
    )
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(
        dir.path(),
        "plan.toml",
        "budget = 20\nseed = 4\n[system]\npreset = \"small\"\n[scenarios.synthetic]\ndays = 60\n",
    );
    let mut same = true;
    for algo in ["ambo", "nsga2", "random"] {
        let a = dir.path().join(format!("{algo}-a"));
        let b = dir.path().join(format!("{algo}-b"));
        run_ok(&["plan", "--config", s(&plan), "--algorithm", algo, "--out", s(&a)]);
        run_ok(&["plan", "--config", s(&plan), "--algorithm", algo, "--out", s(&b)]);
        for f in ["iterations.jsonl", "front.json", "hypervolume.csv", "estimates.csv"] {
            same &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
        }
    }
    // The snapshot alone reproduces the run.
    let again = dir.path().join("replay");
    run_ok(&["plan", "--config", s(&dir.path().join("ambo-a/config.toml")), "--out", s(&again)]);
    let replay = std::fs::read(again.join("front.json")).unwrap() == std::fs::read(dir.path().join("ambo-a/front.json")).unwrap();
    let manifest = read_json(&dir.path().join("nsga2-a/manifest.json"));
    let population = manifest["settings"]["population"].as_u64();
    outcome(
        same && replay && population == Some(12),
        format!("repeat runs identical for ambo/nsga2/random: {same}; replay from snapshot: {replay}; NSGA-II population in manifest {population:?}"),
    )
}

// ---------------------------------------------------------------- 11

fn diversity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for case in [1, 4] {
        let plan = write_plan(
            dir.path(),
            &format!("case{case}.toml"),
            &format!("budget = 60\nseed = 0\n[system]\npreset = \"small\"\ncase = {case}\n[scenarios.synthetic]\ndays = 180\n"),
        );
        let out = dir.path().join(format!("case{case}"));
        run_ok(&["plan", "--config", s(&plan), "--out", s(&out)]);
        runs.push(out);
    }
    let front = read_json(&runs[0].join("front.json"));
    let pts: Vec<Objectives> = front["members"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| [m["objectives"][0].as_f64().unwrap(), m["objectives"][1].as_f64().unwrap()])
        .collect();
    let mutually = pts.iter().all(|p| !pts.iter().any(|q| dominates(q, p)));
    let rep = dir.path().join("report");
    run_ok(&["report", "--runs", s(&runs[0]), s(&runs[1]), "--out", s(&rep)]);
    let summary = read_json(&rep.join("report.json"));
    let hv = |i: usize| summary["runs"][i]["front_hypervolume"].as_f64().unwrap();
    outcome(
        pts.len() >= 5 && mutually && hv(0) >= hv(1),
        format!(
            "Case 1 front has {} non-dominated schemes; HV Case 1 {:.4e} vs Case 4 {:.4e} (reference {})",
            pts.len(),
            hv(0),
            hv(1),
            summary["reference"]
        ),
    )
}

// ---------------------------------------------------------------- harness

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "capital recovery", Some(Duration::from_secs(1)), capital_recovery_factor),
        (2, "QP solver", Some(Duration::from_secs(30)), qp_solver),
        (3, "dispatch oracle", Some(Duration::from_secs(60)), dispatch_oracle),
        (4, "GP correctness", Some(Duration::from_secs(30)), gp_correctness),
        (5, "hypervolume", Some(Duration::from_secs(60)), hypervolume_checks),
        (6, "NEHVI degeneracy", Some(Duration::from_secs(1)), nehvi_degeneracy),
        (7, "AMBO vs baselines", Some(Duration::from_secs(600)), ambo_vs_baselines),
        (8, "noise handling", Some(Duration::from_secs(1800)), noise_handling),
        (9, "scenario moments", Some(Duration::from_secs(10)), scenario_moments),
        (10, "determinism", None, determinism),
        (11, "end-to-end diversity", Some(Duration::from_secs(1800)), diversity),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // Cargo passes libtest flags such as `--nocapture`; `--list` must stay quiet.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut unexpected = Vec::new();
    let mut documented = Vec::new();
    for (n, name, limit, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = pass && in_time;
        println!(
            "criterion {n:>2} {name:<22} {}  [{:.1} s{}] {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.map_or(String::new(), |l| format!(" of {} s", l.as_secs())),
        );
        if !pass {
            if DOCUMENTED_GAPS.contains(&n) {
                documented.push(n);
            } else {
                unexpected.push(n);
            }
        }
    }
    if !documented.is_empty() {
        println!("failing as documented: {documented:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
