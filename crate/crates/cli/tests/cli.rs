//! Command behavior: outputs, exit codes and error messages.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn thermoplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = thermoplan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn season(dir: &Path, days: usize) -> PathBuf {
    let path = dir.join("season.csv");
    ok(&["synth", "--out", s(&path), "--days", &days.to_string()]);
    path
}

fn plan_file(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn scenarios_writes_bundle_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = season(dir.path(), 180);
    let out = dir.path().join("sc");
    ok(&["scenarios", "--input", s(&input), "--out", s(&out)]);
    let bundle = json(&out.join("bundle.json"));
    assert_eq!(bundle["scenarios"].as_array().unwrap().len(), 6);
    assert_eq!(bundle["selection"], "joint");
    let table = std::fs::read_to_string(out.join("selection.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6 * 4);
    assert!(table.lines().next().unwrap().contains(",a,b,"));

    let manifest = json(&out.join("manifest.json"));
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(a["sha256"], hex.as_str());
    }

    // Independent selection may pick different source days per series.
    let ind = dir.path().join("ind");
    ok(&["scenarios", "--input", s(&input), "--out", s(&ind), "--selection", "independent"]);
    assert_eq!(json(&ind.join("bundle.json"))["selection"], "independent");
}

#[test]
fn bad_tables_exit_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let input = season(dir.path(), 28);
    let text = std::fs::read_to_string(&input).unwrap();

    let missing: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    let p = dir.path().join("missing.csv");
    std::fs::write(&p, missing).unwrap();
    let out = thermoplan(&["scenarios", "--input", s(&p), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pv_mw"));

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[6] = lines[6].replacen(",", ",oops", 1);
    let p = dir.path().join("malformed.csv");
    std::fs::write(&p, lines.join("\n")).unwrap();
    let out = thermoplan(&["scenarios", "--input", s(&p), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 7"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("y").exists());
}

#[test]
fn invalid_plans_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for body in [
        "budgit = 3\n[scenarios.synthetic]\ndays = 31\n",
        "[scenarios]\nseason = \"nowhere.csv\"\n",
        "[scenarios.synthetic]\ndays = 31\n[system]\ncase = 9\n",
        "budget = 0\n[scenarios.synthetic]\ndays = 31\n",
        "[system]\npreset = \"small\"\n",
    ] {
        let p = plan_file(dir.path(), "bad.toml", body);
        let res = thermoplan(&["plan", "--config", s(&p), "--out", s(&out)]);
        assert_eq!(res.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(!out.exists());
    let res = thermoplan(&["plan", "--config", s(&dir.path().join("absent.toml")), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan_file(dir.path(), "plan.toml", "budget = 3\n[scenarios.synthetic]\ndays = 31\n");
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let res = thermoplan(&["plan", "--config", s(&p), "--out", s(&blocker.join("run"))]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn plan_benchmark_and_report_fit_together() {
    let dir = tempfile::tempdir().unwrap();
    let input = season(dir.path(), 28);
    let p = plan_file(
        dir.path(),
        "plan.toml",
        "budget = 8\nseed = 2\n[scenarios]\nseason = \"season.csv\"\n",
    );
    let runs: Vec<PathBuf> = ["random", "nsga2"]
        .iter()
        .map(|a| {
            let out = dir.path().join(a);
            let budget = if *a == "nsga2" { "12" } else { "8" };
            ok(&["plan", "--config", s(&p), "--algorithm", a, "--budget", budget, "--out", s(&out)]);
            out
        })
        .collect();

    let r = &runs[0];
    for f in ["config.toml", "scenarios.json", "iterations.jsonl", "front.json", "hypervolume.csv", "estimates.csv"] {
        assert!(r.join(f).exists(), "{f}");
    }
    assert!(!r.join("iterations.jsonl.partial").exists());
    let manifest = json(&r.join("manifest.json"));
    assert_eq!(manifest["algorithm"], "random");
    assert_eq!(manifest["seed"], 2);
    assert_eq!(manifest["watermark"], "synthetic");
    let snapshot = std::fs::read(r.join("config.toml")).unwrap();
    let hex: String = Sha256::digest(&snapshot).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["config_sha256"], hex.as_str());
    assert_eq!(std::fs::read_to_string(r.join("iterations.jsonl")).unwrap().lines().count(), 8);
    // The front is reported in raw capacities.
    let front = json(&r.join("front.json"));
    assert!(front["members"][0]["capacities"]["eb_rated"].is_array());

    ok(&["benchmark", "--run", s(r), "--season", s(&input)]);
    let saa = std::fs::read_to_string(r.join("saa.csv")).unwrap();
    assert_eq!(saa.lines().count(), 1 + 8);
    let rep = json(&r.join("error_report.json"));
    for k in ["posterior_mean", "raw"] {
        for o in ["ann", "res"] {
            assert!(rep[k][o].as_f64().unwrap() >= 0.0);
        }
    }
    assert_eq!(rep["season_days"], 28);

    let out = dir.path().join("report");
    ok(&["report", "--runs", s(&runs[0]), s(&runs[1]), "--out", s(&out), "--reference", "4e7,-1e4"]);
    let fronts = std::fs::read_to_string(out.join("fronts.csv")).unwrap();
    assert!(fronts.starts_with("# reference_point: 40000000,-10000\n"));
    assert!(fronts.contains("\nrandom,random,") && fronts.contains("\nnsga2,nsga2,"));
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    let mut by_run: std::collections::HashMap<String, Vec<f64>> = Default::default();
    for line in traces.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        by_run.entry(cols[0].to_string()).or_default().push(cols[3].parse().unwrap());
    }
    assert_eq!(by_run["random"].len(), 8);
    assert_eq!(by_run["nsga2"].len(), 12);
    for v in by_run.values() {
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn benchmark_needs_a_season_and_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = season(dir.path(), 31);
    let sc = dir.path().join("sc");
    ok(&["scenarios", "--input", s(&input), "--out", s(&sc)]);
    let p = plan_file(dir.path(), "plan.toml", "budget = 4\n[scenarios]\nbundle = \"sc/bundle.json\"\n");
    let run = dir.path().join("run");
    ok(&["plan", "--config", s(&p), "--algorithm", "random", "--out", s(&run)]);
    let res = thermoplan(&["benchmark", "--run", s(&run)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no season"));
    let res = thermoplan(&["benchmark", "--run", s(&dir.path().join("nothing")), "--config", s(&p), "--season", s(&input)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn report_refuses_runs_on_different_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for seed in [1, 2] {
        let p = plan_file(
            dir.path(),
            &format!("p{seed}.toml"),
            &format!("budget = 3\n[scenarios.synthetic]\ndays = 31\nseed = {seed}\n"),
        );
        let out = dir.path().join(format!("r{seed}"));
        ok(&["plan", "--config", s(&p), "--algorithm", "random", "--out", s(&out)]);
        runs.push(out);
    }
    let res = thermoplan(&["report", "--runs", s(&runs[0]), s(&runs[1]), "--out", s(&dir.path().join("rep"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("incompatible"));
}
