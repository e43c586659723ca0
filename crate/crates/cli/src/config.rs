//! The plan file: one TOML document with the system, the scenario source and
//! the optimizer settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use thermoplan::baselines::Nsga2Config;
use thermoplan::dispatch::{EquipmentCase, SystemConfig, TypicalDay};
use thermoplan::moo::AmboConfig;
use thermoplan::scenario::{generate_typical_scenarios, read_season_csv, ScenarioBundle, SeasonData, SelectionMode};
use thermoplan::synth::{generate_season, generate_system, SynthSpec, SystemScale};

pub const DEFAULT_BUDGET: usize = 60;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Ambo,
    Nsga2,
    Random,
}

impl Algorithm {
    pub fn id(self) -> &'static str {
        match self {
            Self::Ambo => "ambo",
            Self::Nsga2 => "nsga2",
            Self::Random => "random",
        }
    }
}

/// Equipment case by number (1 to 5) or by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaseSpec {
    Number(u8),
    Named(EquipmentCase),
}

impl Default for CaseSpec {
    fn default() -> Self {
        Self::Named(EquipmentCase::All)
    }
}

impl CaseSpec {
    pub fn resolve(self) -> anyhow::Result<EquipmentCase> {
        match self {
            Self::Named(c) => Ok(c),
            Self::Number(n) => EquipmentCase::from_number(n).with_context(|| format!("equipment case {n} is not in 1..=5")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    /// Built-in reference system; `small` when neither this nor `file` is set.
    pub preset: Option<SystemScale>,
    /// JSON or TOML system description.
    pub file: Option<PathBuf>,
    pub seed: u64,
    pub case: CaseSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Hourly season table.
    pub season: Option<PathBuf>,
    /// Previously generated typical-scenario bundle.
    pub bundle: Option<PathBuf>,
    /// Generate the season instead of reading it.
    pub synthetic: Option<SynthSpec>,
    pub selection: SelectionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub scenarios: ScenarioSection,
    #[serde(default)]
    pub ambo: AmboConfig,
    #[serde(default)]
    pub nsga2: Nsga2Config,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PlanConfig {
    /// Parses a plan file. Relative paths inside it are resolved against its
    /// directory so the snapshot in a run directory stays usable.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: PlanConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path
            .parent()
            .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
            .unwrap_or(Path::new("."));
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        for p in [&mut cfg.system.file, &mut cfg.scenarios.season, &mut cfg.scenarios.bundle]
            .into_iter()
            .flatten()
        {
            *p = absolute(&base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.budget == 0 {
            bail!("budget must be at least 1");
        }
        if self.system.preset.is_some() && self.system.file.is_some() {
            bail!("[system] sets both `preset` and `file`");
        }
        self.system.case.resolve()?;
        let s = &self.scenarios;
        let sources = [s.season.is_some(), s.bundle.is_some(), s.synthetic.is_some()];
        if sources.iter().filter(|b| **b).count() != 1 {
            bail!("[scenarios] needs exactly one of `season`, `bundle` or `synthetic`");
        }
        if let Some(spec) = &s.synthetic {
            spec.validate()?;
        }
        if self.algorithm == Algorithm::Nsga2 {
            self.nsga2_settings().validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// True when any input comes from the built-in generators.
    pub fn is_synthetic(&self) -> bool {
        self.system.file.is_none() || self.scenarios.synthetic.is_some()
    }

    /// The system before the equipment case is applied.
    pub fn base_system(&self) -> anyhow::Result<SystemConfig> {
        let cfg = match &self.system.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                if path.extension().is_some_and(|e| e == "toml") {
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                } else {
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
            }
            None => generate_system(self.system.preset.unwrap_or(SystemScale::Small), self.system.seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn system(&self) -> anyhow::Result<SystemConfig> {
        let cfg = self.system.case.resolve()?.apply(&self.base_system()?);
        if cfg.search_box().is_empty() {
            bail!("the equipment case leaves nothing to size");
        }
        Ok(cfg)
    }

    /// The full season, when the scenario source has one.
    pub fn season(&self) -> anyhow::Result<Option<SeasonData>> {
        let s = &self.scenarios;
        if let Some(path) = &s.season {
            return Ok(Some(read_season(path)?));
        }
        if let Some(spec) = &s.synthetic {
            return Ok(Some(generate_season(spec)?.season));
        }
        Ok(None)
    }

    pub fn bundle(&self) -> anyhow::Result<ScenarioBundle> {
        if let Some(path) = &self.scenarios.bundle {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let bundle: ScenarioBundle =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if bundle.scenarios.is_empty() {
                bail!("{} holds no typical days", path.display());
            }
            for d in bundle.typical_days() {
                d.validate()?;
            }
            return Ok(bundle);
        }
        let season = self.season()?.context("no scenario source")?;
        Ok(generate_typical_scenarios(&season, self.scenarios.selection)?)
    }

    pub fn ambo_settings(&self, dims: usize) -> AmboConfig {
        AmboConfig {
            seed: self.seed,
            ..self.ambo.clone()
        }
        .with_budget(self.budget, dims)
    }

    pub fn nsga2_settings(&self) -> Nsga2Config {
        Nsga2Config {
            seed: self.seed,
            ..self.nsga2.clone()
        }
        .with_budget(self.budget)
    }
}

pub fn read_season(path: &Path) -> anyhow::Result<SeasonData> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_season_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Identifies the objective definitions: runs sharing it are comparable on
/// one set of axes. The equipment case is left out on purpose.
pub fn objective_scaling(base: &SystemConfig, days: &[TypicalDay]) -> anyhow::Result<String> {
    let doc = serde_json::json!({ "system": base, "days": days });
    Ok(crate::artifacts::sha256_hex(serde_json::to_string(&doc)?.as_bytes()))
}
