use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskforge::campaign::persist::load_result;
use riskforge::campaign::report::{write_rows, ReportBundle};
use riskforge::campaign::{
    build_oracles, feasible_subset, load_indicator_table, run_to_dir, Campaign, CampaignConfig, Scenario,
    DATA_DIR_ENV, LOG_FILE,
};
use riskforge::composition::{Composition, DesignSpace};
use riskforge::extraction::definition::load_dir;
use riskforge::extraction::{
    compute_indicator, substitute_placeholders, DirFetcher, ExtractionConfig, IndicatorValue, KeywordRuleClassifier,
};
use riskforge::optimizer::seed_batch;
use riskforge::supply_risk::{elemental_sr, AggregationMode, Indicator, MissingPolicy, RiskModel};
use riskforge::{Error, Result};

#[derive(Parser)]
#[command(name = "riskforge", version, about = "Supply-risk-aware alloy design campaigns")]
struct Cli {
    /// Directory holding elements.csv, indicators.csv and bcc.csv overrides.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpaceArgs {
    /// Campaign TOML file; flags below override its [space] table.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated element symbols.
    #[arg(long, value_delimiter = ',')]
    elements: Option<Vec<String>>,
    /// Lattice step in atomic fraction.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    min_active: Option<usize>,
    #[arg(long)]
    max_active: Option<usize>,
}

impl SpaceArgs {
    fn config(&self) -> Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(p) => CampaignConfig::load(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(e) = &self.elements {
            c.space.elements = e.iter().map(|s| s.trim().to_string()).collect();
        }
        if let Some(s) = self.step {
            c.space.step = s;
        }
        if let Some(m) = self.min_active {
            c.space.min_active = m;
        }
        if self.max_active.is_some() {
            c.space.max_active = self.max_active;
        }
        c.validate()?;
        Ok(c)
    }

    fn space(&self, c: &CampaignConfig) -> Result<DesignSpace> {
        let s = &c.space;
        DesignSpace::enumerate(&s.elements, s.step, s.min_active, s.max_active.unwrap_or(s.elements.len()))
            .map_err(|e| flag_err("--elements/--step/--min-active/--max-active", e))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the composition lattice as CSV.
    Enumerate {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the compositions passing every constraint.
    Constrain {
        #[command(flatten)]
        space: SpaceArgs,
        /// Exclusive melting-point limit, deg C.
        #[arg(long)]
        melting_max: Option<f64>,
        /// Exclusive thermal-expansion limit, 1/K.
        #[arg(long)]
        cte_max: Option<f64>,
        /// Phase table with element fractions and a bcc column.
        #[arg(long)]
        bcc: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every composition with its per-constraint verdicts.
        #[arg(long)]
        breakdown: Option<PathBuf>,
    },
    /// Elemental and alloy supply-risk indices.
    Risk {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        indicators: Option<PathBuf>,
        /// element_mean or fraction_weighted.
        #[arg(long)]
        mode: Option<String>,
        /// Average over the indicators present instead of failing on gaps.
        #[arg(long)]
        renormalize: bool,
        /// Composition such as Mo0.2Nb0.2Ti0.2V0.2W0.2.
        #[arg(long)]
        alloy: Option<String>,
        /// Directory for elemental_sr.csv and alloy_sr.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the k-medoids starting batch.
    Seed {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a campaign and write its log and report tables.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Continue the log in --out from its last complete iteration.
        #[arg(long)]
        resume: bool,
    },
    /// Render report tables from a campaign log.
    Report {
        /// Campaign log, or the run directory containing it.
        #[arg(long)]
        log: PathBuf,
        /// Output directory; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute indicators from definition files and local documents.
    Extract {
        /// Directory of indicator definition JSON files.
        #[arg(long)]
        definitions: PathBuf,
        /// Directory of retrieved documents, looked up by file name.
        #[arg(long)]
        documents: PathBuf,
        /// Comma-separated element names substituted for @Element.
        #[arg(long, value_delimiter = ',', required = true)]
        element: Vec<String>,
        #[arg(long)]
        year: i32,
        /// Current date passed to adjudication; defaults to the end of --year.
        #[arg(long)]
        date: Option<String>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        max_year_iterations: usize,
        /// Report file, one JSON record per line; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let root = cli.data_dir.as_deref();
    match cli.command {
        Command::Enumerate { space, out } => enumerate(&space, out.as_deref()),
        Command::Constrain {
            space,
            melting_max,
            cte_max,
            bcc,
            out,
            breakdown,
        } => {
            let mut config = space.config()?;
            if let Some(m) = melting_max {
                config.oracles.thresholds.melting_point_c = m;
            }
            if let Some(c) = cte_max {
                config.oracles.thresholds.cte_per_k = c;
            }
            if bcc.is_some() {
                config.data.bcc = bcc;
            }
            constrain(&space, &config, root, out.as_deref(), breakdown.as_deref())
        }
        Command::Risk {
            space,
            indicators,
            mode,
            renormalize,
            alloy,
            out,
        } => {
            let mut config = space.config()?;
            if indicators.is_some() {
                config.data.indicators = indicators;
            }
            if let Some(m) = mode {
                config.risk.mode = m.parse().map_err(|e| flag_err("--mode", e))?;
            }
            if renormalize {
                config.risk.missing = MissingPolicy::Renormalize;
            }
            risk(&space, &config, root, alloy.as_deref(), out.as_deref())
        }
        Command::Seed { space, k, seed } => {
            let config = space.config()?;
            let s = space.space(&config)?;
            let picks = seed_batch(&s, k, seed).map_err(|e| flag_err("--k", e))?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            let mut header = vec!["index".to_string(), "alloy".to_string()];
            header.extend(s.elements().iter().cloned());
            w.write_record(&header).map_err(stdout_err)?;
            for i in picks {
                let mut row = vec![i.to_string(), s.label(i)];
                row.extend(s.fractions(i).iter().map(|x| format!("{x:.6}")));
                w.write_record(&row).map_err(stdout_err)?;
            }
            w.flush().map_err(stdout_err)
        }
        Command::Run {
            config,
            scenario,
            seed,
            batch_size,
            max_iterations,
            out,
            resume,
        } => {
            let mut c = match &config {
                Some(p) => CampaignConfig::load(p)?,
                None => CampaignConfig::default(),
            };
            if let Some(s) = scenario {
                c.scenario = s
                    .parse::<Scenario>()
                    .map_err(|e| flag_err("--scenario", e))?;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(b) = batch_size {
                c.batch_size = b;
            }
            if let Some(m) = max_iterations {
                c.max_iterations = m;
            }
            c.validate().map_err(|e| Error::InvalidArgument(format!("campaign settings: {e}")))?;
            let campaign = Campaign::prepare(c, root)?;
            let result = run_to_dir(&campaign, &out, resume)?;
            let o = result.outcome.as_ref().expect("run records an outcome");
            println!(
                "{}: {} iterations, {} evaluated, front of {}, final HV {:.6}{}{}",
                campaign.config.scenario,
                o.iterations,
                result.observations.len(),
                o.front.len(),
                o.hv_trace.last().copied().unwrap_or(0.0),
                if o.converged { ", converged" } else { "" },
                if o.exhausted { ", pool exhausted" } else { "" },
            );
            Ok(())
        }
        Command::Report { log, out } => {
            let log_path = if log.is_dir() { log.join(LOG_FILE) } else { log };
            let result = load_result(&log_path)?;
            let campaign = Campaign::prepare(result.config.clone(), root)?;
            let dir = out.unwrap_or_else(|| log_path.parent().unwrap_or(Path::new(".")).to_path_buf());
            fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
            for p in ReportBundle::build(&result, &campaign)?.write(&dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Extract {
            definitions,
            documents,
            element,
            year,
            date,
            cache,
            window,
            max_year_iterations,
            out,
        } => {
            let config = ExtractionConfig {
                window,
                max_year_iterations,
                cache_dir: cache,
                ..ExtractionConfig::default()
            };
            let date = date.unwrap_or_else(|| format!("{year}-12-31"));
            extract(&definitions, &documents, &element, year, &date, &config, out.as_deref())
        }
    }
}

/// Prefixes a usage error with the flag it concerns.
fn flag_err(flag: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) | Error::Config(m) => Error::InvalidArgument(format!("{flag}: {m}")),
        other => other,
    }
}

fn stdout_err(e: impl std::fmt::Display) -> Error {
    Error::file("<stdout>", e)
}

/// CSV sink: the named file, or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).map_err(|e| Error::file(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn enumerate(args: &SpaceArgs, out: Option<&Path>) -> Result<()> {
    let config = args.config()?;
    let space = args.space(&config)?;
    space
        .write_csv(sink(out)?, 0..space.len())
        .map_err(|e| Error::file(out.unwrap_or(Path::new("<stdout>")), e))?;
    eprintln!("{} compositions", space.len());
    Ok(())
}

fn constrain(
    args: &SpaceArgs,
    config: &CampaignConfig,
    root: Option<&Path>,
    out: Option<&Path>,
    breakdown: Option<&Path>,
) -> Result<()> {
    let space = args.space(config)?;
    let oracles = build_oracles(config, root)?;
    let feasible = feasible_subset(&space, &oracles)?;
    let label = |p: Option<&Path>| p.unwrap_or(Path::new("<stdout>")).to_path_buf();
    space
        .write_csv(sink(out)?, feasible.iter().copied())
        .map_err(|e| Error::file(label(out), e))?;

    let mut fails = [0usize; 3];
    let mut rows = Vec::new();
    for i in 0..space.len() {
        let c = space.get(i);
        let r = oracles.evaluate_constraints(&c)?;
        for (f, ok) in fails.iter_mut().zip([r.melting_ok, r.cte_ok, r.bcc_ok]) {
            *f += usize::from(!ok);
        }
        if breakdown.is_some() {
            rows.push(vec![
                i.to_string(),
                space.label(i),
                oracles.melting_point(&c)?.to_string(),
                oracles.cte(&c)?.to_string(),
                r.melting_ok.to_string(),
                r.cte_ok.to_string(),
                r.bcc_ok.to_string(),
                r.feasible.to_string(),
            ]);
        }
    }
    if let Some(p) = breakdown {
        let mut w = csv::Writer::from_path(p).map_err(|e| Error::file(p, e))?;
        w.write_record([
            "index",
            "alloy",
            "melting_point_c",
            "cte_per_k",
            "melting_ok",
            "cte_ok",
            "bcc_ok",
            "feasible",
        ])
        .map_err(|e| Error::file(p, e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| Error::file(p, e))?;
        }
        w.flush().map_err(|e| Error::file(p, e))?;
    }
    eprintln!(
        "{} of {} feasible; failing melting point {}, thermal expansion {}, bcc {}",
        feasible.len(),
        space.len(),
        fails[0],
        fails[1],
        fails[2]
    );
    Ok(())
}

fn risk(
    args: &SpaceArgs,
    config: &CampaignConfig,
    root: Option<&Path>,
    alloy: Option<&str>,
    out: Option<&Path>,
) -> Result<()> {
    let table = load_indicator_table(config.data.indicators.as_deref(), root)?;
    let elements = &config.space.elements;
    let model = RiskModel::new(&table, elements, config.risk.mode, config.risk.missing)?;

    let mut header: Vec<String> = vec!["element".into()];
    header.extend(Indicator::ALL.iter().map(|i| i.code().to_string()));
    header.extend(["sr", "missing"].map(String::from));
    let mut elemental = vec![header];
    for e in elements {
        let Some(p) = table.get(e) else {
            log::warn!("no indicator profile for {e}");
            continue;
        };
        let sr = elemental_sr(&p.scores, config.risk.missing).map_err(|err| Error::InvalidData(format!("{e}: {err}")))?;
        let mut row = vec![e.clone()];
        row.extend(Indicator::ALL.iter().map(|&i| p.scores.get(i).map(|v| v.to_string()).unwrap_or_default()));
        row.push(sr.value.to_string());
        row.push(sr.missing.iter().map(|i| i.code()).collect::<Vec<_>>().join(" "));
        elemental.push(row);
    }

    if let Some(spec) = alloy {
        let c = Composition::parse(spec, elements).map_err(|e| flag_err("--alloy", e))?;
        println!("{spec},{},{}", mode_name(model.mode()), model.alloy_sr(&c)?);
    } else if out.is_none() {
        let mut w = csv::Writer::from_writer(io::stdout().lock());
        for r in &elemental {
            w.write_record(r).map_err(stdout_err)?;
        }
        w.flush().map_err(stdout_err)?;
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_rows(&dir.join("elemental_sr.csv"), &elemental)?;
        let space = args.space(config)?;
        let mut rows = vec![["index", "alloy", "sr_element_mean", "sr_fraction_weighted"].map(String::from).to_vec()];
        for i in 0..space.len() {
            let c = space.get(i);
            rows.push(vec![
                i.to_string(),
                space.label(i),
                model.alloy_sr_with(&c, AggregationMode::ElementMean)?.to_string(),
                model.alloy_sr_with(&c, AggregationMode::FractionWeighted)?.to_string(),
            ]);
        }
        write_rows(&dir.join("alloy_sr.csv"), &rows)?;
    }
    Ok(())
}

fn mode_name(mode: AggregationMode) -> &'static str {
    match mode {
        AggregationMode::ElementMean => "element_mean",
        AggregationMode::FractionWeighted => "fraction_weighted",
    }
}

fn extract(
    definitions: &Path,
    documents: &Path,
    elements: &[String],
    year: i32,
    date: &str,
    config: &ExtractionConfig,
    out: Option<&Path>,
) -> Result<()> {
    if !documents.is_dir() {
        return Err(Error::file(documents, "--documents is not a directory"));
    }
    let defs = load_dir(definitions)?;
    if defs.is_empty() {
        return Err(Error::file(definitions, "no indicator definitions (*.json) found"));
    }
    let mut fetcher = DirFetcher::new(documents);
    let mut w = sink(out)?;
    let label = out.unwrap_or(Path::new("<stdout>"));
    for element in elements {
        for (path, def) in &defs {
            // The shipped mock classifier keys each statistic on its first
            // search keyword.
            let mut classifier = def.statistics.iter().fold(KeywordRuleClassifier::new(), |m, s| {
                let kw = s.search_keywords().remove(0);
                m.rule(&s.statistic_name, &substitute_placeholders(&kw, Some(element), Some(year)))
            });
            let report = compute_indicator(def, element, year, date, &mut fetcher, &mut classifier, config)
                .map_err(|e| Error::file(path, e))?;
            match &report.result {
                IndicatorValue::Computed { value } => eprintln!("{element} {}: {value}", def.name),
                IndicatorValue::Skipped { statistic, reason } => eprintln!(
                    "{element} {}: skipped ({}{reason})",
                    def.name,
                    statistic.as_ref().map(|s| format!("{s}: ")).unwrap_or_default()
                ),
            }
            let line = serde_json::to_string(&report).map_err(|e| Error::file(label, e))?;
            writeln!(w, "{line}").map_err(|e| Error::file(label, e))?;
        }
    }
    w.flush().map_err(|e| Error::file(label, e))
}
