//! `plan`: one optimizer run written to a run directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thermoplan::baselines::{nsga2_run_with, random_search_with, DispatchEvaluator};
use thermoplan::dispatch::CapacityScheme;
use thermoplan::moo::{
    adaptive_reference, ambo_run_with, hypervolume, hypervolume_trace, posterior_estimates, to_unit, Objectives,
    ParetoFront, Provenance, ReferencePoint, RunRecord,
};
use thermoplan::synth::SYNTHETIC_TAG;

use crate::artifacts::{csv_bytes, write_atomic, write_json, Artifact, RunManifest};
use crate::config::{objective_scaling, Algorithm, PlanConfig};
use crate::{Classify, CmdResult, Failure};

pub const CONFIG: &str = "config.toml";
pub const SCENARIOS: &str = "scenarios.json";
pub const LOG: &str = "iterations.jsonl";
pub const FRONT: &str = "front.json";
pub const TRACE: &str = "hypervolume.csv";
pub const ESTIMATES: &str = "estimates.csv";

pub const OBJECTIVES: [&str; 2] = ["annual_cost", "neg_res_consumed"];

pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    /// Position in the iteration log.
    pub index: usize,
    pub scheme: Vec<f64>,
    pub capacities: CapacityScheme,
    /// Scheme in search-box coordinates.
    pub unit: Vec<f64>,
    pub objectives: Objectives,
    pub observed: Objectives,
    pub posterior_std: Option<Objectives>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontDocument {
    pub algorithm: String,
    pub provenance: Provenance,
    pub objectives: [String; 2],
    /// Run-local reference point over all observations.
    pub reference: ReferencePoint,
    pub hypervolume: f64,
    pub members: Vec<FrontEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub evaluation: usize,
    pub scheme: String,
    pub observed_cost: Option<f64>,
    pub observed_res: Option<f64>,
    pub mean_cost: Option<f64>,
    pub mean_res: Option<f64>,
    pub std_cost: Option<f64>,
    pub std_res: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub evaluation: usize,
    pub hypervolume: f64,
}

pub fn join_scheme(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn parse_scheme(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(';')
        .map(|v| v.parse::<f64>().with_context(|| format!("bad scheme entry `{v}`")))
        .collect()
}

/// Streams records to `<name>.partial`; the final name appears only once the
/// run has finished.
struct LogSink {
    path: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl LogSink {
    fn create(path: PathBuf) -> anyhow::Result<Self> {
        let partial = path.with_extension("jsonl.partial");
        let file = File::create(&partial).with_context(|| format!("creating {}", partial.display()))?;
        Ok(Self {
            path,
            partial,
            out: BufWriter::new(file),
            error: None,
        })
    }

    fn push(&mut self, rec: &RunRecord) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(rec).expect("records serialize");
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> anyhow::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e).context("writing the iteration log");
        }
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        std::fs::rename(&self.partial, &self.path).with_context(|| format!("renaming to {}", self.path.display()))?;
        Ok(())
    }
}

struct Outcome {
    front: ParetoFront,
    log: Vec<RunRecord>,
    mean: Option<Vec<Objectives>>,
    std: Option<Vec<Objectives>>,
    settings: serde_json::Value,
}

pub fn plan(config_path: &Path, ov: Overrides, out: &Path) -> CmdResult {
    let started = Utc::now();
    let mut cfg = PlanConfig::load(config_path).invalid()?;
    if let Some(a) = ov.algorithm {
        cfg.algorithm = a;
    }
    if let Some(b) = ov.budget {
        cfg.budget = b;
    }
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    cfg.validate().invalid()?;
    let system = cfg.system().invalid()?;
    let bundle = cfg.bundle().invalid()?;
    let days = bundle.typical_days();
    let scaling = objective_scaling(&cfg.base_system().invalid()?, &days).runtime()?;
    let bounds = system.search_box();

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .runtime()?;
    let snapshot = cfg.to_toml().runtime()?;
    write_atomic(&out.join(CONFIG), snapshot.as_bytes()).runtime()?;
    write_json(&out.join(SCENARIOS), &bundle).runtime()?;

    let mut sink = LogSink::create(out.join(LOG)).runtime()?;
    let mut evaluator = DispatchEvaluator::new(&system, &days);
    let ambo_cfg = cfg.ambo_settings(bounds.len());
    let outcome = {
        let mut observer = |r: &RunRecord| sink.push(r);
        match cfg.algorithm {
            Algorithm::Ambo => ambo_run_with(&mut evaluator, &bounds, &ambo_cfg, &mut observer).map(|run| Outcome {
                front: run.front,
                log: run.log,
                mean: Some(run.posterior_mean),
                std: Some(run.posterior_std),
                settings: serde_json::to_value(&ambo_cfg).expect("settings serialize"),
            })
            .map_err(anyhow::Error::from),
            Algorithm::Nsga2 => {
                let ncfg = cfg.nsga2_settings();
                nsga2_run_with(&mut evaluator, &bounds, &ncfg, &mut observer)
                    .map(|run| Outcome {
                        front: run.front,
                        log: run.log,
                        mean: None,
                        std: None,
                        settings: serde_json::to_value(&ncfg).expect("settings serialize"),
                    })
                    .map_err(anyhow::Error::from)
            }
            Algorithm::Random => random_search_with(&mut evaluator, &bounds, cfg.budget, cfg.seed, &mut observer)
                .map(|run| Outcome {
                    front: run.front,
                    log: run.log,
                    mean: None,
                    std: None,
                    settings: serde_json::json!({ "budget": cfg.budget, "seed": cfg.seed }),
                })
                .map_err(anyhow::Error::from),
        }
    };
    // On failure the partial log stays behind for inspection.
    let mut outcome = outcome.context("optimizer failed").runtime()?;
    sink.finish().runtime()?;
    if evaluator.penalized > 0 {
        log::warn!("{} evaluations needed shortfall penalties", evaluator.penalized);
    }

    if outcome.mean.is_none() {
        match posterior_estimates(&outcome.log, &bounds, &ambo_cfg) {
            Ok((m, s)) => {
                outcome.mean = Some(m);
                outcome.std = Some(s);
            }
            Err(e) => log::warn!("no surrogate estimates for this run: {e}"),
        }
    }

    let observed: Vec<Objectives> = outcome.log.iter().filter_map(|r| r.objectives).collect();
    if observed.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("every evaluation failed")));
    }
    let reference = adaptive_reference(&observed);
    let members: Vec<FrontEntry> = outcome
        .front
        .members
        .iter()
        .map(|m| {
            Ok(FrontEntry {
                index: m.index,
                scheme: m.scheme.clone(),
                capacities: CapacityScheme::from_vector(&system, &m.scheme)?,
                unit: to_unit(&m.scheme, &bounds),
                objectives: m.objectives,
                observed: m.observed,
                posterior_std: m.posterior_std,
            })
        })
        .collect::<anyhow::Result<_>>()
        .runtime()?;
    let doc = FrontDocument {
        algorithm: cfg.algorithm.id().to_string(),
        provenance: outcome.front.provenance,
        objectives: OBJECTIVES.map(String::from),
        reference,
        hypervolume: hypervolume(&outcome.front.objectives(), &reference.point),
        members,
    };
    write_json(&out.join(FRONT), &doc).runtime()?;

    let trace = hypervolume_trace(&outcome.log, &reference.point);
    let bytes = csv_bytes(|w| {
        for (rec, hv) in outcome.log.iter().zip(&trace) {
            w.serialize(TraceRow {
                evaluation: rec.evaluation,
                hypervolume: *hv,
            })?;
        }
        Ok(())
    })
    .runtime()?;
    write_atomic(&out.join(TRACE), &bytes).runtime()?;

    let bytes = csv_bytes(|w| {
        for (i, rec) in outcome.log.iter().enumerate() {
            let m = outcome.mean.as_ref().map(|v| v[i]);
            let s = outcome.std.as_ref().map(|v| v[i]);
            w.serialize(EstimateRow {
                evaluation: rec.evaluation,
                scheme: join_scheme(&rec.scheme),
                observed_cost: rec.objectives.map(|y| y[0]),
                observed_res: rec.objectives.map(|y| y[1]),
                mean_cost: m.map(|y| y[0]),
                mean_res: m.map(|y| y[1]),
                std_cost: s.map(|y| y[0]),
                std_res: s.map(|y| y[1]),
            })?;
        }
        Ok(())
    })
    .runtime()?;
    write_atomic(&out.join(ESTIMATES), &bytes).runtime()?;

    let mut manifest = RunManifest::new("plan", started);
    manifest.config_sha256 = Some(crate::artifacts::sha256_hex(snapshot.as_bytes()));
    manifest.seed = Some(cfg.seed);
    manifest.algorithm = Some(cfg.algorithm.id().to_string());
    manifest.settings = Some(outcome.settings);
    manifest.budget = Some(cfg.budget);
    manifest.objective_scaling = Some(scaling);
    if cfg.is_synthetic() {
        manifest.watermark = Some(SYNTHETIC_TAG.to_string());
    }
    for p in [&cfg.system.file, &cfg.scenarios.season, &cfg.scenarios.bundle].into_iter().flatten() {
        manifest.inputs.push(Artifact::input(p).runtime()?);
    }
    manifest
        .finish(out, &[CONFIG, SCENARIOS, LOG, FRONT, TRACE, ESTIMATES])
        .runtime()?;
    println!(
        "{}: {} evaluations, {} front members, written to {}",
        cfg.algorithm.id(),
        outcome.log.len(),
        doc.members.len(),
        out.display()
    );
    Ok(())
}
