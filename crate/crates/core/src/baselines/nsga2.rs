//! NSGA-II with simulated-binary crossover and polynomial mutation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::moo::{from_unit, pareto_filter, Evaluator, Objectives, ParetoFront, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub population: usize,
    /// Evaluated populations including the initial one, so the budget is
    /// `population × generations`.
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    /// Per-variable mutation probability; `1/d` when unset.
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self {
            population: 12,
            generations: 5,
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_prob: None,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

impl Nsga2Config {
    /// Generation count that spends `budget` evaluations (at least one).
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.generations = (budget / self.population.max(1)).max(1);
        self
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(BaselineError::Config(format!(
                "population must be even and ≥ 4, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(BaselineError::Config("need at least one generation".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || self.mutation_prob.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(BaselineError::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(self.crossover_eta >= 0.0 && self.mutation_eta >= 0.0) {
            return Err(BaselineError::Config("distribution indices must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nsga2Run {
    /// Rank-0 members of the final population.
    pub front: ParetoFront,
    pub log: Vec<RunRecord>,
    pub evaluations: usize,
    /// Log indices of each generation's surviving population.
    pub populations: Vec<Vec<usize>>,
}

/// Fronts of `objs` as index lists, best first.
pub fn non_dominated_sort(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let dom = |a: &Objectives, b: &Objectives| a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if dom(&objs[i], &objs[j]) {
                dominated_by[i].push(j);
            } else if dom(&objs[j], &objs[i]) {
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(objs: &[Objectives], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for k in 0..2 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| objs[front[a]][k].total_cmp(&objs[front[b]][k]).then(a.cmp(&b)));
        let lo = objs[front[order[0]]][k];
        let hi = objs[front[order[m - 1]]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let span = hi - lo;
        if !(span > 0.0 && span.is_finite()) {
            continue;
        }
        for w in 1..m - 1 {
            dist[order[w]] += (objs[front[order[w + 1]]][k] - objs[front[order[w - 1]]][k]) / span;
        }
    }
    dist
}

fn sbx(a: &[f64], b: &[f64], eta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for i in 0..a.len() {
        if rng.random::<f64>() > 0.5 || (a[i] - b[i]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if a[i] < b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
        let u: f64 = rng.random();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * y1 / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (1.0 - y2) / (y2 - y1));
        let v1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
        let v2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
        if rng.random::<f64>() < 0.5 {
            c1[i] = v2;
            c2[i] = v1;
        } else {
            c1[i] = v1;
            c2[i] = v2;
        }
    }
    (c1, c2)
}

fn polynomial_mutation(x: &mut [f64], prob: f64, eta: f64, rng: &mut ChaCha8Rng) {
    let pow = 1.0 / (eta + 1.0);
    for v in x.iter_mut() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let y = *v;
        let u: f64 = rng.random();
        let dq = if u < 0.5 {
            let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - y).powf(eta + 1.0);
            val.powf(pow) - 1.0
        } else {
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * y.powf(eta + 1.0);
            1.0 - val.powf(pow)
        };
        *v = (y + dq).clamp(0.0, 1.0);
    }
}

/// Keeps `size` of `pool` by rank, then crowding distance.
fn survive(objs: &[Objectives], pool: &[usize], size: usize) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let local: Vec<Objectives> = pool.iter().map(|&i| objs[i]).collect();
    let mut chosen = Vec::new();
    let mut rank = Vec::new();
    let mut crowd = Vec::new();
    for (r, front) in non_dominated_sort(&local).into_iter().enumerate() {
        let d = crowding_distance(&local, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        if chosen.len() + front.len() > size {
            order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        }
        for k in order {
            if chosen.len() == size {
                break;
            }
            chosen.push(pool[front[k]]);
            rank.push(r);
            crowd.push(d[k]);
        }
        if chosen.len() == size {
            break;
        }
    }
    (chosen, rank, crowd)
}

pub fn nsga2_run(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    cfg: &Nsga2Config,
) -> Result<Nsga2Run, BaselineError> {
    nsga2_run_with(evaluator, bounds, cfg, &mut |_| {})
}

pub fn nsga2_run_with(
    evaluator: &mut dyn Evaluator,
    bounds: &[(f64, f64)],
    cfg: &Nsga2Config,
    observer: &mut dyn FnMut(&RunRecord),
) -> Result<Nsga2Run, BaselineError> {
    cfg.validate()?;
    let d = bounds.len();
    if d == 0 {
        return Err(BaselineError::Config("empty search box".into()));
    }
    let pm = cfg.mutation_prob.unwrap_or(1.0 / d as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut units: Vec<Vec<f64>> = Vec::new();
    // Failed evaluations rank behind everything else.
    let mut objs: Vec<Objectives> = Vec::new();
    let mut log: Vec<RunRecord> = Vec::new();

    let mut evaluate = |u: Vec<f64>, generation: usize, units: &mut Vec<Vec<f64>>, objs: &mut Vec<Objectives>, log: &mut Vec<RunRecord>| {
        let scheme = from_unit(&u, bounds);
        let (y, error) = match evaluator.evaluate(&scheme) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => (Some(y), None),
            Ok(y) => (None, Some(format!("non-finite objectives {y:?}"))),
            Err(e) => (None, Some(e)),
        };
        let rec = RunRecord {
            evaluation: log.len(),
            iteration: generation,
            scheme,
            objectives: y,
            error,
            ambo: None,
        };
        observer(&rec);
        log.push(rec);
        units.push(u);
        objs.push(y.unwrap_or([f64::MAX, f64::MAX]));
    };

    for _ in 0..cfg.population {
        let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        evaluate(u, 0, &mut units, &mut objs, &mut log);
    }
    let start: Vec<usize> = (0..cfg.population).collect();
    let (mut pop, mut rank, mut crowd) = survive(&objs, &start, cfg.population);
    let mut populations = vec![pop.clone()];

    for g in 1..cfg.generations {
        let better = |a: usize, b: usize| {
            if rank[a] != rank[b] {
                rank[a] < rank[b]
            } else {
                crowd[a] > crowd[b]
            }
        };
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            if better(a, b) {
                a
            } else if better(b, a) {
                b
            } else if rng.random::<bool>() {
                a
            } else {
                b
            }
        };
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(cfg.population);
        while children.len() < cfg.population {
            let pa = &units[pop[tournament(&mut rng)]];
            let pb = &units[pop[tournament(&mut rng)]];
            let (mut c1, mut c2) = if rng.random::<f64>() < cfg.crossover_prob {
                sbx(pa, pb, cfg.crossover_eta, &mut rng)
            } else {
                (pa.clone(), pb.clone())
            };
            polynomial_mutation(&mut c1, pm, cfg.mutation_eta, &mut rng);
            polynomial_mutation(&mut c2, pm, cfg.mutation_eta, &mut rng);
            children.push(c1);
            children.push(c2);
        }
        let first = units.len();
        for c in children {
            evaluate(c, g, &mut units, &mut objs, &mut log);
        }
        let combined: Vec<usize> = pop.iter().copied().chain(first..units.len()).collect();
        (pop, rank, crowd) = survive(&objs, &combined, cfg.population);
        populations.push(pop.clone());
    }

    let final_ok: Vec<usize> = pop.iter().copied().filter(|&i| log[i].objectives.is_some()).collect();
    let schemes: Vec<Vec<f64>> = final_ok.iter().map(|&i| log[i].scheme.clone()).collect();
    let ys: Vec<Objectives> = final_ok.iter().map(|&i| objs[i]).collect();
    let mut front = pareto_filter(&schemes, &ys);
    for m in &mut front.members {
        m.index = final_ok[m.index];
    }
    Ok(Nsga2Run {
        front,
        evaluations: log.len(),
        log,
        populations,
    })
}
