//! `report`: plot-ready tables over several runs under one reference point.

use std::io::BufRead;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use thermoplan::moo::{adaptive_reference, hypervolume, hypervolume_trace, Objectives, Provenance, RunRecord};

use crate::artifacts::{read_json, write_atomic, write_json, Artifact, RunManifest, MANIFEST};
use crate::plan::{join_scheme, FrontDocument, FRONT, LOG};
use crate::{Classify, CmdResult};

pub const FRONTS: &str = "fronts.csv";
pub const TRACES: &str = "traces.csv";
pub const SUMMARY: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub algorithm: String,
    pub provenance: Provenance,
    pub evaluations: usize,
    pub front_size: usize,
    /// Hypervolume of the run's reported front.
    pub front_hypervolume: f64,
    /// Last value of the raw-observation trace.
    pub observed_hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub reference: Objectives,
    pub runs: Vec<RunSummary>,
}

struct LoadedRun {
    label: String,
    manifest: RunManifest,
    front: FrontDocument,
    log: Vec<RunRecord>,
}

pub fn read_log(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn load(dir: &Path) -> anyhow::Result<LoadedRun> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST))?;
    if manifest.command != "plan" {
        bail!("{} is not a plan run", dir.display());
    }
    let name = std::path::absolute(dir)
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedRun {
        label: name,
        front: read_json(&dir.join(FRONT))?,
        log: read_log(&dir.join(LOG))?,
        manifest,
    })
}

/// One comment line naming the reference point, then the table.
fn with_header(reference: &Objectives, rows: Vec<Vec<String>>, columns: &[&str]) -> anyhow::Result<Vec<u8>> {
    let mut buf = format!("# reference_point: {},{}\n", reference[0], reference[1]).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn report(dirs: &[std::path::PathBuf], out: &Path, reference: Option<Objectives>) -> CmdResult {
    let started = Utc::now();
    let mut runs = dirs.iter().map(|d| load(d)).collect::<anyhow::Result<Vec<_>>>().invalid()?;
    let scaling = runs[0].manifest.objective_scaling.clone();
    for r in &runs[1..] {
        if r.manifest.objective_scaling != scaling {
            return Err(anyhow!(
                "runs `{}` and `{}` have incompatible objective scalings",
                runs[0].label,
                r.label
            ))
            .invalid();
        }
    }
    // Keep labels unique so rows stay attributable.
    for i in 1..runs.len() {
        if runs[..i].iter().any(|r| r.label == runs[i].label) {
            runs[i].label = format!("{}#{i}", runs[i].label);
        }
    }
    let reference = match reference {
        Some(r) if r.iter().all(|v| v.is_finite()) => r,
        Some(r) => return Err(anyhow!("reference point {r:?} is not finite")).invalid(),
        None => {
            let all: Vec<Objectives> = runs.iter().flat_map(|r| r.log.iter().filter_map(|x| x.objectives)).collect();
            if all.is_empty() {
                return Err(anyhow!("the runs hold no successful evaluations")).invalid();
            }
            adaptive_reference(&all).point
        }
    };

    let mut front_rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut summaries = Vec::new();
    for run in &runs {
        let algorithm = run.manifest.algorithm.clone().unwrap_or_default();
        let provenance = serde_json::to_value(run.front.provenance)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        for m in &run.front.members {
            front_rows.push(vec![
                run.label.clone(),
                algorithm.clone(),
                provenance.clone(),
                m.index.to_string(),
                m.objectives[0].to_string(),
                m.objectives[1].to_string(),
                m.observed[0].to_string(),
                m.observed[1].to_string(),
                join_scheme(&m.scheme),
            ]);
        }
        let trace = hypervolume_trace(&run.log, &reference);
        for (rec, hv) in run.log.iter().zip(&trace) {
            trace_rows.push(vec![
                run.label.clone(),
                algorithm.clone(),
                rec.evaluation.to_string(),
                hv.to_string(),
            ]);
        }
        let front: Vec<Objectives> = run.front.members.iter().map(|m| m.objectives).collect();
        summaries.push(RunSummary {
            run: run.label.clone(),
            algorithm,
            provenance: run.front.provenance,
            evaluations: run.log.len(),
            front_size: front.len(),
            front_hypervolume: hypervolume(&front, &reference),
            observed_hypervolume: trace.last().copied().unwrap_or(0.0),
        });
    }

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .runtime()?;
    let fronts = with_header(
        &reference,
        front_rows,
        &[
            "run",
            "algorithm",
            "provenance",
            "index",
            "annual_cost",
            "neg_res_consumed",
            "observed_cost",
            "observed_res",
            "scheme",
        ],
    )
    .runtime()?;
    write_atomic(&out.join(FRONTS), &fronts).runtime()?;
    let traces = with_header(&reference, trace_rows, &["run", "algorithm", "evaluation", "hypervolume"]).runtime()?;
    write_atomic(&out.join(TRACES), &traces).runtime()?;
    write_json(
        &out.join(SUMMARY),
        &ReportSummary {
            reference,
            runs: summaries,
        },
    )
    .runtime()?;

    let mut manifest = RunManifest::new("report", started);
    manifest.objective_scaling = scaling;
    for d in dirs {
        manifest.inputs.push(Artifact::input(&d.join(MANIFEST)).runtime()?);
    }
    if runs.iter().any(|r| r.manifest.watermark.is_some()) {
        manifest.watermark = runs.iter().find_map(|r| r.manifest.watermark.clone());
    }
    manifest.finish(out, &[FRONTS, TRACES, SUMMARY]).runtime()?;
    println!("{} runs merged into {} (reference {:?})", runs.len(), out.display(), reference);
    Ok(())
}
