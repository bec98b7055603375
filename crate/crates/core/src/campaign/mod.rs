//! Alloy campaigns: configuration, data loading, the oracle-backed problem,
//! persistence, and report tables.

mod config;
pub mod persist;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{CampaignConfig, DataConfig, OracleConfig, RiskConfig, Scenario, SpaceConfig};

use self::persist::{CampaignResult, LogWriter, Record};
use self::report::ReportBundle;
use crate::composition::DesignSpace;
use crate::error::{Error, Result};
use crate::exec;
use crate::optimizer::{run_loop, Evaluation, Event, LoopOutcome, Problem, Resume};
use crate::properties::{BccLookup, ElementTable, Objective, PropertyOracles, surrogate_by_name};
use crate::supply_risk::{RiskModel, SupplyRiskTable};

/// Environment variable naming the default data-file root.
pub const DATA_DIR_ENV: &str = "RISKFORGE_DATA_DIR";

/// Explicit path, else `<root>/<name>` if it exists, else `None` (shipped
/// table).
fn data_file(explicit: Option<&Path>, root: Option<&Path>, name: &str) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| root.map(|r| r.join(name)).filter(|p| p.is_file()))
}

pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

pub fn load_element_table(explicit: Option<&Path>, root: Option<&Path>) -> Result<ElementTable> {
    match data_file(explicit, root, "elements.csv") {
        Some(p) => ElementTable::load(&p),
        None => Ok(ElementTable::builtin()),
    }
}

pub fn load_indicator_table(explicit: Option<&Path>, root: Option<&Path>) -> Result<SupplyRiskTable> {
    match data_file(explicit, root, "indicators.csv") {
        Some(p) => SupplyRiskTable::load(&p),
        None => Ok(SupplyRiskTable::builtin()),
    }
}

/// Oracles configured per `config`, reading data files as needed.
pub fn build_oracles(config: &CampaignConfig, root: Option<&Path>) -> Result<PropertyOracles> {
    let table = load_element_table(config.data.elements.as_deref(), root)?;
    let elements = &config.space.elements;
    let mut oracles = PropertyOracles::new(&table, elements)?
        .with_surrogate(surrogate_by_name(&config.oracles.yield_surrogate, config.oracles.gamma)?)
        .with_thresholds(config.oracles.thresholds);
    match data_file(config.data.bcc.as_deref(), root, "bcc.csv") {
        Some(p) => {
            let file = std::fs::File::open(&p).map_err(|e| Error::file(&p, e))?;
            let lookup = BccLookup::from_reader(file, &p.display().to_string(), elements)?
                .with_default(config.oracles.bcc_default);
            oracles = oracles.with_phase_predicate(Box::new(lookup));
        }
        None if !config.oracles.bcc_default => {
            return Err(Error::Config("bcc_default = false needs a phase table".into()));
        }
        None => {}
    }
    Ok(oracles)
}

pub fn build_risk(config: &CampaignConfig, root: Option<&Path>) -> Result<RiskModel> {
    let table = load_indicator_table(config.data.indicators.as_deref(), root)?;
    RiskModel::new(&table, &config.space.elements, config.risk.mode, config.risk.missing)
}

/// A design space with its oracles, ready to optimize over.
#[derive(Debug)]
pub struct Campaign {
    pub config: CampaignConfig,
    pub space: DesignSpace,
    pub oracles: PropertyOracles,
    pub risk: RiskModel,
    pub objectives: Vec<Objective>,
    /// Candidate indices the optimizer may query.
    pub pool: Vec<usize>,
    features: Vec<f64>,
}

impl Campaign {
    pub fn prepare(config: CampaignConfig, root: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let s = &config.space;
        let space = DesignSpace::enumerate(
            &s.elements,
            s.step,
            s.min_active,
            s.max_active.unwrap_or(s.elements.len()),
        )?;
        let oracles = build_oracles(&config, root)?;
        let risk = build_risk(&config, root)?;
        let pool = if config.scenario.feasible_only() {
            feasible_subset(&space, &oracles)?
        } else {
            (0..space.len()).collect()
        };
        if pool.is_empty() {
            return Err(Error::NoData(format!(
                "no composition passes the constraints for scenario {}",
                config.scenario
            )));
        }
        let features = (0..space.len()).flat_map(|i| space.fractions(i)).collect();
        Ok(Campaign {
            objectives: config.active_objectives(),
            config,
            space,
            oracles,
            risk,
            pool,
            features,
        })
    }

    pub fn run(&self, resume: Resume, sink: &mut dyn FnMut(Event<'_>) -> Result<()>) -> Result<LoopOutcome> {
        run_loop(self, &self.pool, &self.config.loop_settings(), resume, sink)
    }
}

/// Space indices whose constraint report is feasible, ascending.
pub fn feasible_subset(space: &DesignSpace, oracles: &PropertyOracles) -> Result<Vec<usize>> {
    let verdicts = exec::try_map_range(space.len(), |i| oracles.evaluate_constraints(&space.get(i)))?;
    Ok(verdicts
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.feasible)
        .map(|(i, _)| i)
        .collect())
}

impl Problem for Campaign {
    fn features(&self, index: usize) -> &[f64] {
        let d = self.space.elements().len();
        &self.features[index * d..(index + 1) * d]
    }

    fn evaluate(&self, index: usize) -> Result<Evaluation> {
        let c = self.space.get(index);
        Ok(Evaluation {
            objectives: self.oracles.evaluate_objectives(&c, &self.objectives, Some(&self.risk))?,
            constraints: Some(self.oracles.evaluate_constraints(&c)?),
            supply_risk: Some(self.risk.alloy_sr(&c)?),
            cost: Some(self.oracles.cost(&c)?),
        })
    }
}

/// File names inside a run's output directory.
pub const LOG_FILE: &str = "log.jsonl";
pub const METADATA_FILE: &str = "metadata.json";

/// Runs `campaign`, streaming the log into `out` and writing the report
/// tables and a metadata file with wall-clock times. With `resume`, an
/// existing log in `out` is continued from its last complete iteration.
pub fn run_to_dir(campaign: &Campaign, out: &Path, resume: bool) -> Result<CampaignResult> {
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    let log_path = out.join(LOG_FILE);
    let started = chrono::Utc::now();
    let (mut result, mut writer) = if resume && log_path.is_file() {
        let prior = persist::recover(&log_path)?;
        if prior.config != campaign.config {
            return Err(Error::file(&log_path, "logged config differs from the requested campaign"));
        }
        (prior, LogWriter::append(&log_path)?)
    } else {
        let mut w = LogWriter::create(&log_path)?;
        w.write_log(&Record::Config {
            config: campaign.config.clone(),
        })?;
        (CampaignResult::new(campaign.config.clone()), w)
    };
    let resumed_after = result.iterations.len();
    let outcome = campaign.run(result.resume_state(), &mut |event| match event {
        Event::Observed(o) => {
            writer.write_log(&Record::Observation(o.clone()))?;
            result.observations.push(o.clone());
            Ok(())
        }
        Event::Iteration(s) => {
            writer.write_log(&Record::Iteration(s.clone()))?;
            result.iterations.push(s.clone());
            Ok(())
        }
    })?;
    writer.write_log(&Record::Outcome(outcome.clone()))?;
    result.outcome = Some(outcome);

    ReportBundle::build(&result, campaign)?.write(out)?;
    let finished = chrono::Utc::now();
    let metadata = serde_json::json!({
        "started": started.to_rfc3339(),
        "finished": finished.to_rfc3339(),
        "elapsed_seconds": (finished - started).num_milliseconds() as f64 / 1000.0,
        "resumed_after_iteration": resume.then_some(resumed_after),
        "parallel": exec::is_parallel(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    let meta_path = out.join(METADATA_FILE);
    std::fs::write(&meta_path, format!("{metadata:#}\n")).map_err(|e| Error::file(&meta_path, e))?;
    Ok(result)
}
