//! `synth` and `scenarios`.

use std::path::Path;

use anyhow::Context;
use chrono::Utc;
use serde::Serialize;
use thermoplan::scenario::{generate_typical_scenarios, write_season_csv, SelectionMode, Series};
use thermoplan::synth::{generate_season, generate_system, SynthSpec, SystemScale};

use crate::artifacts::{csv_bytes, write_atomic, write_json, Artifact, RunManifest};
use crate::config::read_season;
use crate::{Classify, CmdResult};

pub const BUNDLE: &str = "bundle.json";
pub const SELECTION: &str = "selection.csv";

pub fn synth(out: &Path, days: Option<usize>, seed: Option<u64>, scale: SystemScale, system: Option<&Path>) -> CmdResult {
    let mut spec = match scale {
        SystemScale::Small => SynthSpec::small(),
        SystemScale::Large => SynthSpec::large(),
    };
    if let Some(d) = days {
        spec.days = d;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let season = generate_season(&spec).invalid()?.season;
    let mut buf = Vec::new();
    write_season_csv(&season, &mut buf).runtime()?;
    write_atomic(out, &buf).runtime()?;
    if let Some(path) = system {
        write_json(path, &generate_system(scale, seed.unwrap_or(0))).runtime()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SelectionRow {
    month: u32,
    day_in_month: usize,
    weight: f64,
    series: &'static str,
    source_day: usize,
    source_date: String,
    a: f64,
    b: f64,
    adjusted: bool,
    floored: bool,
}

fn series_name(s: Series) -> &'static str {
    match s {
        Series::Electric => "electric_load",
        Series::Heat => "heat_load",
        Series::Wind => "wind",
        Series::Pv => "pv",
    }
}

pub fn scenarios(input: &Path, out: &Path, mode: SelectionMode) -> CmdResult {
    let started = Utc::now();
    let season = read_season(input).invalid()?;
    let bundle = generate_typical_scenarios(&season, mode)
        .with_context(|| format!("selecting typical days from {}", input.display()))
        .invalid()?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .runtime()?;
    write_json(&out.join(BUNDLE), &bundle).runtime()?;

    let table = csv_bytes(|w| {
        for sc in &bundle.scenarios {
            for adj in &sc.adjustments {
                w.serialize(SelectionRow {
                    month: sc.month,
                    day_in_month: sc.day_in_month,
                    weight: sc.day.weight,
                    series: series_name(adj.series),
                    source_day: adj.source_day,
                    source_date: season.days[adj.source_day].date.to_string(),
                    a: adj.a,
                    b: adj.b,
                    adjusted: adj.adjusted,
                    floored: adj.floored,
                })?;
            }
        }
        Ok(())
    })
    .runtime()?;
    write_atomic(&out.join(SELECTION), &table).runtime()?;

    let mut manifest = RunManifest::new("scenarios", started);
    manifest.settings = Some(serde_json::json!({ "selection": mode }));
    manifest.inputs.push(Artifact::input(input).runtime()?);
    manifest.finish(out, &[BUNDLE, SELECTION]).runtime()?;
    println!("{} typical days written to {}", bundle.scenarios.len(), out.display());
    Ok(())
}
