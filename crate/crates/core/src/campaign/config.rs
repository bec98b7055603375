use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::optimizer::{BatchStrategy, LoopSettings};
use crate::properties::{Objective, Thresholds};
use crate::supply_risk::{AggregationMode, MissingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    DesignPerf,
    DesignPerfSr,
    FeasiblePerf,
    FeasiblePerfSr,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::DesignPerf,
        Scenario::DesignPerfSr,
        Scenario::FeasiblePerf,
        Scenario::FeasiblePerfSr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DesignPerf => "design_perf",
            Scenario::DesignPerfSr => "design_perf_sr",
            Scenario::FeasiblePerf => "feasible_perf",
            Scenario::FeasiblePerfSr => "feasible_perf_sr",
        }
    }

    /// Restrict the pool to compositions passing every constraint.
    pub fn feasible_only(self) -> bool {
        matches!(self, Scenario::FeasiblePerf | Scenario::FeasiblePerfSr)
    }

    pub fn with_supply_risk(self) -> bool {
        matches!(self, Scenario::DesignPerfSr | Scenario::FeasiblePerfSr)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    pub elements: Vec<String>,
    pub step: f64,
    pub min_active: usize,
    pub max_active: Option<usize>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            elements: ["Mo", "Nb", "Ti", "V", "W"].map(String::from).to_vec(),
            step: 0.05,
            min_active: 2,
            max_active: None,
        }
    }
}

/// Data-file overrides. Unset entries fall back to the data root, then to
/// the shipped tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub elements: Option<PathBuf>,
    pub indicators: Option<PathBuf>,
    /// CSV of element fractions plus a `bcc` column.
    pub bcc: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub mode: AggregationMode,
    pub missing: MissingPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub yield_surrogate: String,
    pub gamma: f64,
    pub thresholds: Thresholds,
    /// Verdict for compositions missing from the phase table.
    pub bcc_default: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            yield_surrogate: "rom_entropy".into(),
            gamma: 0.5,
            thresholds: Thresholds::default(),
            bcc_default: true,
        }
    }
}

/// A campaign as read from its TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub convergence_threshold: f64,
    pub ehvi_samples: usize,
    pub strategy: BatchStrategy,
    /// Performance objectives; the supply-risk objective is appended for
    /// `*_sr` scenarios.
    pub objectives: Vec<Objective>,
    pub space: SpaceConfig,
    pub gp: GpConfig,
    pub data: DataConfig,
    pub risk: RiskConfig,
    pub oracles: OracleConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let l = LoopSettings::default();
        CampaignConfig {
            scenario: Scenario::default(),
            seed: l.seed,
            batch_size: l.batch_size,
            max_iterations: l.max_iterations,
            convergence_threshold: l.convergence_threshold,
            ehvi_samples: l.ehvi_samples,
            strategy: l.strategy,
            objectives: Objective::PERFORMANCE.to_vec(),
            space: SpaceConfig::default(),
            gp: l.gp,
            data: DataConfig::default(),
            risk: RiskConfig::default(),
            oracles: OracleConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative data paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.data.elements, &mut config.data.indicators, &mut config.data.bcc]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.loop_settings().validate()?;
        if self.objectives.is_empty() {
            return Err(Error::Config("objectives must not be empty".into()));
        }
        if self.objectives.contains(&Objective::SupplyRisk) {
            return Err(Error::Config(
                "supply_risk is added by the *_sr scenarios, not listed in objectives".into(),
            ));
        }
        let mut seen = self.objectives.clone();
        seen.sort_by_key(|o| o.name());
        seen.dedup();
        if seen.len() != self.objectives.len() {
            return Err(Error::Config("objectives contain duplicates".into()));
        }
        if self.space.elements.is_empty() {
            return Err(Error::Config("space.elements must not be empty".into()));
        }
        Ok(())
    }

    /// Objectives in minimization order, supply risk last when present.
    pub fn active_objectives(&self) -> Vec<Objective> {
        let mut v = self.objectives.clone();
        if self.scenario.with_supply_risk() {
            v.push(Objective::SupplyRisk);
        }
        v
    }

    pub fn loop_settings(&self) -> LoopSettings {
        LoopSettings {
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            convergence_threshold: self.convergence_threshold,
            seed: self.seed,
            ehvi_samples: self.ehvi_samples,
            strategy: self.strategy,
            gp: self.gp.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = CampaignConfig::default();
        assert_eq!(c.batch_size, 10);
        assert_eq!(c.convergence_threshold, 0.05);
        assert_eq!(CampaignConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(CampaignConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn scenario_objectives() {
        let mut c = CampaignConfig::from_toml("scenario = \"feasible_perf_sr\"\nseed = 3").unwrap();
        assert_eq!(c.active_objectives().len(), 6);
        assert_eq!(c.active_objectives().last(), Some(&Objective::SupplyRisk));
        assert!(c.scenario.feasible_only());
        c.scenario = Scenario::DesignPerf;
        assert_eq!(c.active_objectives().len(), 5);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "batch_size = 0",
            "convergence_threshold = 1.5",
            "scenario = \"nope\"",
            "objectives = [\"supply_risk\"]",
            "objectives = []",
            "unknown_key = 1",
            "[space]\nelements = []",
        ] {
            assert!(CampaignConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn nested_tables_parse() {
        let c = CampaignConfig::from_toml(
            "objectives = [\"yield_strength\", \"density\"]\n\
             [space]\nelements = [\"Mo\", \"Ti\"]\nstep = 0.25\n\
             [gp]\nmode = \"mle\"\n\
             [risk]\nmode = \"fraction_weighted\"\n\
             [oracles.thresholds]\nmelting_point_c = 2500.0\ncte_per_k = 2e-5\n",
        )
        .unwrap();
        assert_eq!(c.space.step, 0.25);
        assert_eq!(c.risk.mode, AggregationMode::FractionWeighted);
        assert_eq!(c.oracles.thresholds.melting_point_c, 2500.0);
        assert_eq!(c.active_objectives(), vec![Objective::YieldStrength, Objective::Density]);

        let c = CampaignConfig::from_toml("[oracles.thresholds]\nmelting_point_c = 2500.0\n[gp.bounds]\nlength_scale = [0.1, 2.0]\n").unwrap();
        assert_eq!(c.oracles.thresholds.cte_per_k, 1e-5);
        assert_eq!(c.gp.bounds.length_scale, (0.1, 2.0));
    }
}
