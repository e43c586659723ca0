//! Typical-day construction from a heating-season record.
//!
//! Each month is reduced to one representative day: the medoid under
//! standardized daily moments, then reshaped with `x' = xᵃ + b` so each series
//! reproduces the month's pooled mean and variance.

mod io;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dispatch::TypicalDay;

pub use io::{read_season_csv, write_season_csv};

/// Interval tolerance for the exponent bisection.
const BISECT_TOL: f64 = 1e-10;
const EXPONENT_RANGE: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid season: {0}")]
    InvalidSeason(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error(
        "no exponent in [{lo}, {hi}] reaches variance {target:.6e}; \
         reachable range is [{var_lo:.6e}, {var_hi:.6e}]"
    )]
    NoExponent {
        lo: f64,
        hi: f64,
        target: f64,
        var_lo: f64,
        var_hi: f64,
    },
    #[error("curve needs at least two distinct values to change its variance")]
    FlatCurve,
    #[error("io: {0}")]
    Io(String),
}

/// One recorded day of hourly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub electric_load: Vec<f64>,
    pub heat_load: Vec<f64>,
    pub wind_max: Vec<f64>,
    pub pv_max: Vec<f64>,
    pub date: NaiveDate,
}

impl DayRecord {
    pub fn month(&self) -> u32 {
        self.date.month()
    }

    pub fn series(&self, s: Series) -> &[f64] {
        match s {
            Series::Electric => &self.electric_load,
            Series::Heat => &self.heat_load,
            Series::Wind => &self.wind_max,
            Series::Pv => &self.pv_max,
        }
    }

    pub fn net_load(&self) -> Vec<f64> {
        (0..self.electric_load.len())
            .map(|t| self.electric_load[t] - self.wind_max[t] - self.pv_max[t])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Electric,
    Heat,
    Wind,
    Pv,
}

impl Series {
    pub const ALL: [Series; 4] = [Series::Electric, Series::Heat, Series::Wind, Series::Pv];
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeasonData {
    pub days: Vec<DayRecord>,
}

impl SeasonData {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.days.is_empty() {
            return Err(ScenarioError::InvalidSeason("no days".into()));
        }
        let steps = self.days[0].electric_load.len();
        if steps == 0 {
            return Err(ScenarioError::InvalidSeason("empty day".into()));
        }
        for (d, rec) in self.days.iter().enumerate() {
            for s in Series::ALL {
                let v = rec.series(s);
                if v.len() != steps {
                    return Err(ScenarioError::InvalidSeason(format!(
                        "day {d}: {s:?} has {} samples, expected {steps}",
                        v.len()
                    )));
                }
                if let Some(x) = v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                    return Err(ScenarioError::InvalidSeason(format!(
                        "day {d}: {s:?} value {x} is negative or non-finite"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Day indices grouped by month, in order of first appearance.
    pub fn months(&self) -> Vec<(u32, Vec<usize>)> {
        let mut out: Vec<(u32, Vec<usize>)> = Vec::new();
        for (i, d) in self.days.iter().enumerate() {
            match out.iter_mut().find(|(m, _)| *m == d.month()) {
                Some((_, v)) => v.push(i),
                None => out.push((d.month(), vec![i])),
            }
        }
        out
    }
}

/// Population mean and variance.
pub fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayFeatures {
    pub mean_heat: f64,
    pub var_heat: f64,
    pub mean_net: f64,
    pub var_net: f64,
}

impl DayFeatures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mean_heat, self.var_heat, self.mean_net, self.var_net]
    }
}

pub fn compute_features(day: &DayRecord) -> DayFeatures {
    let (mean_heat, var_heat) = moments(&day.heat_load);
    let (mean_net, var_net) = moments(&day.net_load());
    DayFeatures {
        mean_heat,
        var_heat,
        mean_net,
        var_net,
    }
}

/// Index of the row minimizing the summed Euclidean distance to all rows
/// after per-column z-scoring. Ties go to the lowest index.
pub fn select_medoid(features: &[Vec<f64>]) -> usize {
    let n = features.len();
    if n <= 1 {
        return 0;
    }
    let dims = features[0].len();
    let mut z = features.to_vec();
    for k in 0..dims {
        let col: Vec<f64> = features.iter().map(|f| f[k]).collect();
        let (mean, var) = moments(&col);
        let sd = var.sqrt();
        for row in z.iter_mut() {
            // A constant column carries no information.
            row[k] = if sd > 1e-12 * (1.0 + mean.abs()) { (row[k] - mean) / sd } else { 0.0 };
        }
    }
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let total: f64 = (0..n)
            .map(|j| {
                z[i].iter()
                    .zip(&z[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        if total < best.1 {
            best = (i, total);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAdjustment {
    pub curve: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

/// The curve mapped onto `[1, 2]`, raised to `a` and mapped back, without `b`.
fn power_transform(curve: &[f64], lo: f64, span: f64, a: f64) -> Vec<f64> {
    curve
        .iter()
        .map(|x| lo + span * ((1.0 + (x - lo) / span).powf(a) - 1.0))
        .collect()
}

/// Reshapes `curve` so its population mean and variance hit the targets.
pub fn adjust_curve(curve: &[f64], target_mean: f64, target_var: f64) -> Result<CurveAdjustment, ScenarioError> {
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let (mean, var) = moments(curve);
    if span <= 1e-12 * (1.0 + hi.abs()) {
        if target_var <= 1e-12 * (1.0 + target_mean * target_mean) {
            let b = target_mean - mean;
            return Ok(CurveAdjustment {
                curve: curve.iter().map(|x| x + b).collect(),
                a: 1.0,
                b,
            });
        }
        return Err(ScenarioError::FlatCurve);
    }

    let var_at = |a: f64| moments(&power_transform(curve, lo, span, a)).1;
    let (mut a_lo, mut a_hi) = EXPONENT_RANGE;
    let (v_lo, v_hi) = (var_at(a_lo), var_at(a_hi));
    let a = if (target_var - var).abs() <= 1e-12 * var.max(1e-300) {
        1.0
    } else {
        if !(v_lo <= target_var && target_var <= v_hi) {
            return Err(ScenarioError::NoExponent {
                lo: a_lo,
                hi: a_hi,
                target: target_var,
                var_lo: v_lo,
                var_hi: v_hi,
            });
        }
        while a_hi - a_lo > BISECT_TOL {
            let mid = 0.5 * (a_lo + a_hi);
            if var_at(mid) < target_var {
                a_lo = mid;
            } else {
                a_hi = mid;
            }
        }
        0.5 * (a_lo + a_hi)
    };
    let shaped = power_transform(curve, lo, span, a);
    let b = target_mean - moments(&shaped).0;
    Ok(CurveAdjustment {
        curve: shaped.iter().map(|x| x + b).collect(),
        a,
        b,
    })
}

/// Smallest `b` with `mean(max(floor, x + b)) ≥ target`.
fn shift_for_mean(shaped: &[f64], floor: f64, target: f64) -> f64 {
    let mean_at = |b: f64| shaped.iter().map(|x| (x + b).max(floor)).sum::<f64>() / shaped.len() as f64;
    let lo_x = shaped.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_x = shaped.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (floor - hi_x, target - lo_x);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi
}

/// Like [`adjust_curve`], but values are truncated at `floor` after the shift
/// and `(a, b)` are solved so the truncated curve has the target moments.
pub fn adjust_curve_floored(
    curve: &[f64],
    target_mean: f64,
    target_var: f64,
    floor: f64,
) -> Result<CurveAdjustment, ScenarioError> {
    if target_mean < floor {
        return Err(ScenarioError::InvalidSeason(format!(
            "target mean {target_mean} lies below the floor {floor}"
        )));
    }
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 1e-12 * (1.0 + hi.abs()) {
        return Err(ScenarioError::FlatCurve);
    }
    let build = |a: f64| -> (Vec<f64>, f64) {
        let shaped = power_transform(curve, lo, span, a);
        let b = shift_for_mean(&shaped, floor, target_mean);
        (shaped.iter().map(|x| (x + b).max(floor)).collect(), b)
    };
    let var_at = |a: f64| moments(&build(a).0).1;
    let (mut a_lo, mut a_hi) = EXPONENT_RANGE;
    let (v_lo, v_hi) = (var_at(a_lo), var_at(a_hi));
    if !(v_lo <= target_var && target_var <= v_hi) {
        return Err(ScenarioError::NoExponent {
            lo: a_lo,
            hi: a_hi,
            target: target_var,
            var_lo: v_lo,
            var_hi: v_hi,
        });
    }
    while a_hi - a_lo > BISECT_TOL {
        let mid = 0.5 * (a_lo + a_hi);
        if var_at(mid) < target_var {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
    }
    let a = 0.5 * (a_lo + a_hi);
    let (curve, b) = build(a);
    Ok(CurveAdjustment { curve, a, b })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// One day per month chosen on heat and net-load moments together.
    #[default]
    Joint,
    /// Each series picks its own day from its own moments.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesAdjustment {
    pub series: Series,
    /// Season-wide index of the source day.
    pub source_day: usize,
    pub a: f64,
    pub b: f64,
    /// False when the reshaping failed and the raw medoid was kept.
    pub adjusted: bool,
    /// True when the curve was truncated at zero while matching moments.
    pub floored: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalScenario {
    pub month: u32,
    /// Position of the selected day within its month, 0-based.
    pub day_in_month: usize,
    pub day: TypicalDay,
    pub adjustments: Vec<SeriesAdjustment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBundle {
    pub selection: SelectionMode,
    pub scenarios: Vec<TypicalScenario>,
}

impl ScenarioBundle {
    pub fn typical_days(&self) -> Vec<TypicalDay> {
        self.scenarios.iter().map(|s| s.day.clone()).collect()
    }
}

fn pooled(season: &SeasonData, idx: &[usize], s: Series) -> Vec<f64> {
    idx.iter().flat_map(|&i| season.days[i].series(s).iter().copied()).collect()
}

/// One typical day per month, weighted by the number of days it stands for.
pub fn generate_typical_scenarios(
    season: &SeasonData,
    mode: SelectionMode,
) -> Result<ScenarioBundle, ScenarioError> {
    season.validate()?;
    let mut scenarios = Vec::new();
    for (month, idx) in season.months() {
        let joint: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| compute_features(&season.days[i]).as_array().to_vec())
            .collect();
        let joint_pick = select_medoid(&joint);
        let mut picks = [joint_pick; 4];
        if mode == SelectionMode::Independent {
            for (k, s) in Series::ALL.into_iter().enumerate() {
                let feats: Vec<Vec<f64>> = idx
                    .iter()
                    .map(|&i| {
                        let (m, v) = moments(season.days[i].series(s));
                        vec![m, v]
                    })
                    .collect();
                picks[k] = select_medoid(&feats);
            }
        }

        let mut series_out: Vec<Vec<f64>> = Vec::with_capacity(4);
        let mut adjustments = Vec::with_capacity(4);
        for (k, s) in Series::ALL.into_iter().enumerate() {
            let source = idx[picks[k]];
            let raw = season.days[source].series(s);
            let (target_mean, target_var) = moments(&pooled(season, &idx, s));
            // Series are physical powers, so the reshaped curve must stay ≥ 0.
            let attempt = adjust_curve(raw, target_mean, target_var).and_then(|adj| {
                if adj.curve.iter().all(|v| *v >= 0.0) {
                    Ok((adj, false))
                } else {
                    adjust_curve_floored(raw, target_mean, target_var, 0.0).map(|adj| (adj, true))
                }
            });
            match attempt {
                Ok((adj, floored)) => {
                    adjustments.push(SeriesAdjustment {
                        series: s,
                        source_day: source,
                        a: adj.a,
                        b: adj.b,
                        adjusted: true,
                        floored,
                        warning: None,
                    });
                    series_out.push(adj.curve);
                }
                Err(e) => {
                    log::warn!("month {month}, {s:?}: keeping unadjusted medoid ({e})");
                    adjustments.push(SeriesAdjustment {
                        series: s,
                        source_day: source,
                        a: 1.0,
                        b: 0.0,
                        adjusted: false,
                        floored: false,
                        warning: Some(e.to_string()),
                    });
                    series_out.push(raw.to_vec());
                }
            }
        }
        let mut it = series_out.into_iter();
        let day = TypicalDay {
            electric_load: it.next().unwrap_or_default(),
            heat_load: it.next().unwrap_or_default(),
            wind_max: it.next().unwrap_or_default(),
            pv_max: it.next().unwrap_or_default(),
            weight: idx.len() as f64,
        };
        scenarios.push(TypicalScenario {
            month,
            day_in_month: joint_pick,
            day,
            adjustments,
        });
    }
    Ok(ScenarioBundle {
        selection: mode,
        scenarios,
    })
}
