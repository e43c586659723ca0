//! `benchmark`: full-season SAA values for every scheme of a run and the
//! estimator errors against them.

use std::path::Path;

use anyhow::{anyhow, Context};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thermoplan::baselines::{error_metrics, saa_benchmark, BaselineError, ErrorReport};
use thermoplan::dispatch::CapacityScheme;
use thermoplan::moo::Objectives;
use thermoplan::synth::SYNTHETIC_TAG;

use crate::artifacts::{csv_bytes, write_atomic, write_json, Artifact, RunManifest};
use crate::config::{read_season, PlanConfig};
use crate::plan::{parse_scheme, EstimateRow, CONFIG, ESTIMATES};
use crate::{Classify, CmdResult, Failure};

pub const SAA: &str = "saa.csv";
pub const ERRORS: &str = "error_report.json";
pub const BENCHMARK_MANIFEST: &str = "benchmark_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaRow {
    pub evaluation: usize,
    pub scheme: String,
    pub annual_cost: Option<f64>,
    pub neg_res_consumed: Option<f64>,
    pub investment: Option<f64>,
    pub generation: Option<f64>,
    pub infeasible_days: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub season_days: usize,
    /// Evaluations left out because the benchmark could not score them.
    pub skipped: Vec<usize>,
    #[serde(flatten)]
    pub errors: ErrorReport,
}

pub fn read_estimates(run: &Path) -> anyhow::Result<Vec<EstimateRow>> {
    let path = run.join(ESTIMATES);
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("{} is not a completed run", run.display()))?;
    rdr.deserialize()
        .collect::<Result<Vec<EstimateRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn benchmark(run: &Path, config: Option<&Path>, season_path: Option<&Path>) -> CmdResult {
    let started = Utc::now();
    let config_path = config.map(Path::to_path_buf).unwrap_or_else(|| run.join(CONFIG));
    let cfg = PlanConfig::load(&config_path).invalid()?;
    let system = cfg.system().invalid()?;
    let season = match season_path {
        Some(p) => read_season(p).invalid()?,
        None => cfg
            .season()
            .invalid()?
            .ok_or_else(|| Failure::Invalid(anyhow!("no season: pass --season or use a plan with a season source")))?,
    };
    let rows = read_estimates(run).invalid()?;

    let mut saa_rows = Vec::new();
    let (mut means, mut raws, mut saas) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = Vec::new();
    for row in &rows {
        let (Some(c), Some(r)) = (row.observed_cost, row.observed_res) else {
            continue;
        };
        let x = parse_scheme(&row.scheme).invalid()?;
        let scheme = CapacityScheme::from_vector(&system, &x).invalid()?;
        let mut out = SaaRow {
            evaluation: row.evaluation,
            scheme: row.scheme.clone(),
            annual_cost: None,
            neg_res_consumed: None,
            investment: None,
            generation: None,
            infeasible_days: 0,
            error: None,
        };
        match saa_benchmark(&system, &scheme, &season) {
            Ok(s) => {
                out.annual_cost = Some(s.objectives.annual_cost);
                out.neg_res_consumed = Some(s.objectives.neg_res_consumed);
                out.investment = Some(s.investment);
                out.generation = Some(s.generation);
                out.infeasible_days = s.infeasible.len();
                let (Some(mc), Some(mr)) = (row.mean_cost, row.mean_res) else {
                    return Err(Failure::Invalid(anyhow!("run has no posterior estimates")));
                };
                means.push([mc, mr] as Objectives);
                raws.push([c, r]);
                saas.push(s.objectives.as_array());
            }
            Err(e @ BaselineError::TooManyInfeasible { .. }) => {
                log::warn!("evaluation {}: {e}", row.evaluation);
                out.error = Some(e.to_string());
                skipped.push(row.evaluation);
            }
            Err(e) => return Err(Failure::Runtime(e.into())),
        }
        saa_rows.push(out);
    }
    let errors = error_metrics(&means, &raws, &saas).runtime()?;
    let report = BenchmarkReport {
        season_days: season.days.len(),
        skipped,
        errors,
    };

    let bytes = csv_bytes(|w| {
        for r in &saa_rows {
            w.serialize(r)?;
        }
        Ok(())
    })
    .runtime()?;
    write_atomic(&run.join(SAA), &bytes).runtime()?;
    write_json(&run.join(ERRORS), &report).runtime()?;

    let mut manifest = RunManifest::new("benchmark", started);
    manifest.inputs.push(Artifact::input(&config_path).runtime()?);
    if let Some(p) = season_path {
        manifest.inputs.push(Artifact::input(p).runtime()?);
    }
    if cfg.is_synthetic() {
        manifest.watermark = Some(SYNTHETIC_TAG.to_string());
    }
    manifest.finish_as(run, BENCHMARK_MANIFEST, &[SAA, ERRORS]).runtime()?;
    let e = &report.errors;
    println!(
        "{} schemes on {} days: posterior-mean error cost {:.4} res {:.4}; raw error cost {:.4} res {:.4}",
        e.schemes, report.season_days, e.posterior_mean.ann, e.posterior_mean.res, e.raw.ann, e.raw.res
    );
    Ok(())
}
