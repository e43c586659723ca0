//! Pareto machinery for two minimized objectives, exact hypervolume, the
//! NEHVI acquisition and the adaptive optimizer loop.

mod ambo;
mod nehvi;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ambo::{
    ambo_run, ambo_run_with, hypervolume_trace, AmboConfig, AmboDiagnostics, AmboError, AmboRun, Evaluator,
    ObservationSet, RunRecord, posterior_estimates,
};
pub use nehvi::{nehvi, optimize_acquisition, AcquisitionOptions, AcquisitionResult, NehviContext, Surrogate};

/// One objective vector; both coordinates are minimized.
pub type Objectives = [f64; 2];

/// Componentwise `≤` with at least one strict `<`.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Indices of the non-dominated points in ascending order. Exact duplicates
/// keep only their first occurrence; non-finite points are dropped.
pub fn pareto_indices(points: &[Objectives]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].iter().all(|v| v.is_finite()))
        .collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    let mut best = f64::INFINITY;
    let mut keep = Vec::new();
    for i in order {
        if points[i][1] < best {
            best = points[i][1];
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RawObservation,
    PosteriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    /// Position of the scheme in the evaluation order.
    pub index: usize,
    pub scheme: Vec<f64>,
    /// The coordinates the front was filtered on.
    pub objectives: Objectives,
    /// What the evaluator returned for this scheme.
    pub observed: Objectives,
    pub posterior_std: Option<Objectives>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub provenance: Provenance,
    pub members: Vec<FrontMember>,
}

impl ParetoFront {
    pub fn objectives(&self) -> Vec<Objectives> {
        self.members.iter().map(|m| m.objectives).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Non-dominated subset of raw observations.
pub fn pareto_filter(schemes: &[Vec<f64>], objectives: &[Objectives]) -> ParetoFront {
    let members = pareto_indices(objectives)
        .into_iter()
        .map(|i| FrontMember {
            index: i,
            scheme: schemes[i].clone(),
            objectives: objectives[i],
            observed: objectives[i],
            posterior_std: None,
        })
        .collect();
    ParetoFront {
        provenance: Provenance::RawObservation,
        members,
    }
}

fn inside(p: &Objectives, r: &Objectives) -> bool {
    p[0] < r[0] && p[1] < r[1]
}

/// Number of points that fail to dominate `r` strictly and so add nothing
/// to [`hypervolume`].
pub fn outside_reference(points: &[Objectives], r: &Objectives) -> usize {
    points.iter().filter(|p| !inside(p, r)).count()
}

/// Area dominated by `points` and bounded by `r`. Points that do not
/// strictly dominate `r` are ignored; dominated points are harmless.
pub fn hypervolume(points: &[Objectives], r: &Objectives) -> f64 {
    let mut pts: Vec<Objectives> = points.iter().filter(|p| inside(p, r)).copied().collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut floor = r[1];
    let mut area = 0.0;
    for p in pts {
        if p[1] < floor {
            area += (r[0] - p[0]) * (floor - p[1]);
            floor = p[1];
        }
    }
    area
}

/// Non-dominated points strictly inside `r`, sorted by the first objective.
pub(crate) fn sorted_front(points: &[Objectives], r: &Objectives) -> Vec<Objectives> {
    let inner: Vec<Objectives> = points.iter().filter(|p| inside(p, r)).copied().collect();
    let mut front: Vec<Objectives> = pareto_indices(&inner).into_iter().map(|i| inner[i]).collect();
    front.sort_by(|a, b| a[0].total_cmp(&b[0]));
    front
}

/// Improvement of adding `y` to a front produced by [`sorted_front`].
pub(crate) fn hvi_sorted(y: &Objectives, front: &[Objectives], r: &Objectives) -> f64 {
    if !inside(y, r) {
        return 0.0;
    }
    let mut covered = 0.0;
    let mut floor = r[1];
    for p in front {
        let q0 = p[0].max(y[0]);
        let q1 = p[1].max(y[1]);
        if q1 < floor {
            covered += (r[0] - q0) * (floor - q1);
            floor = q1;
        }
    }
    ((r[0] - y[0]) * (r[1] - y[1]) - covered).max(0.0)
}

/// Hypervolume gained by adding `y` to `front`.
pub fn hypervolume_improvement(y: &Objectives, front: &[Objectives], r: &Objectives) -> f64 {
    hvi_sorted(y, &sorted_front(front, r), r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub point: Objectives,
    /// Coordinates where the plain rule was not worse than every observation.
    pub fallback: [bool; 2],
}

/// `r = ŷ_max − 0.1 ŷ_min` per coordinate, replaced by
/// `ŷ_max + 0.1 (ŷ_max − ŷ_min) + 1e-6` wherever that is not above `ŷ_max`.
pub fn adaptive_reference(yhat: &[Objectives]) -> ReferencePoint {
    let mut point = [0.0; 2];
    let mut fallback = [false; 2];
    for k in 0..2 {
        let hi = yhat.iter().map(|y| y[k]).fold(f64::NEG_INFINITY, f64::max);
        let lo = yhat.iter().map(|y| y[k]).fold(f64::INFINITY, f64::min);
        let (hi, lo) = if hi.is_finite() { (hi, lo) } else { (0.0, 0.0) };
        let r = hi - 0.1 * lo;
        if r > hi {
            point[k] = r;
        } else {
            point[k] = hi + 0.1 * (hi - lo) + 1e-6;
            fallback[k] = true;
        }
    }
    ReferencePoint { point, fallback }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f /= b;
    }
    out
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// First `n` points of a Halton sequence in `[0, 1)^d`, randomized by a
/// seeded shift modulo 1. Prefixes are nested for a fixed seed.
pub fn halton_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(d <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    (1..=n as u64)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let v = radical_inverse(i, PRIMES[k]) + shift[k];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

/// Maps a raw point into the unit box.
pub fn to_unit(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

pub fn from_unit(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter().zip(bounds).map(|(v, (lo, hi))| lo + v.clamp(0.0, 1.0) * (hi - lo)).collect()
}

/// SplitMix64 finalizer, used to derive independent seed streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
