//! Line-delimited JSON campaign logs.
//!
//! A log opens with the campaign config, then interleaves observation and
//! iteration records as the loop produces them, and ends with the outcome.
//! Wall-clock data is kept out of the log so that reruns are byte-identical.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CampaignConfig;
use crate::error::{Error, Result};
use crate::optimizer::{IterationSummary, LoopOutcome, Observation, Resume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Config { config: CampaignConfig },
    Observation(Observation),
    Iteration(IterationSummary),
    Outcome(LoopOutcome),
}

/// Everything a log holds, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub observations: Vec<Observation>,
    pub iterations: Vec<IterationSummary>,
    pub outcome: Option<LoopOutcome>,
}

impl CampaignResult {
    pub fn new(config: CampaignConfig) -> Self {
        CampaignResult {
            config,
            observations: Vec::new(),
            iterations: Vec::new(),
            outcome: None,
        }
    }

    /// Hypervolume after each iteration, under the final normalization.
    pub fn hv_trace(&self) -> &[f64] {
        self.iterations.last().map_or(&[], |s| &s.hv_history)
    }

    /// Candidate indices on the final front.
    pub fn front(&self) -> &[usize] {
        self.iterations.last().map_or(&[], |s| &s.front)
    }

    pub fn records(&self) -> Vec<Record> {
        let mut out = vec![Record::Config {
            config: self.config.clone(),
        }];
        let mut obs = self.observations.iter().peekable();
        for s in &self.iterations {
            while let Some(o) = obs.next_if(|o| o.iteration <= s.iteration) {
                out.push(Record::Observation(o.clone()));
            }
            out.push(Record::Iteration(s.clone()));
        }
        out.extend(obs.map(|o| Record::Observation(o.clone())));
        if let Some(o) = &self.outcome {
            out.push(Record::Outcome(o.clone()));
        }
        out
    }

    fn apply(&mut self, record: Record) -> std::result::Result<(), String> {
        match record {
            Record::Config { .. } => return Err("config record after the first line".into()),
            Record::Observation(o) => {
                if self.observations.iter().any(|p| p.index == o.index) {
                    return Err(format!("composition {} observed twice", o.index));
                }
                self.observations.push(o);
            }
            Record::Iteration(s) => self.iterations.push(s),
            Record::Outcome(o) => self.outcome = Some(o),
        }
        Ok(())
    }

    /// Loop state after the last complete iteration.
    pub fn resume_state(&self) -> Resume {
        let last = self.iterations.last().map_or(0, |s| s.iteration);
        Resume {
            observations: self
                .observations
                .iter()
                .filter(|o| o.iteration <= last)
                .cloned()
                .collect(),
            summaries: self.iterations.clone(),
        }
    }
}

/// Appends records to a log, one flushed line each.
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::file(path, e))?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_log(&mut self, record: &Record) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::file(&self.path, e))?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::file(&self.path, e))
    }
}

pub fn write_result(path: &Path, result: &CampaignResult) -> Result<()> {
    let mut w = LogWriter::create(path)?;
    for r in result.records() {
        w.write_log(&r)?;
    }
    Ok(())
}

fn read(path: &Path, tolerate_tail: bool) -> Result<(CampaignResult, bool)> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::file(path, e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let Some(last) = last else {
        return Err(Error::EmptyResult(path.to_path_buf()));
    };
    let load_err = |line: usize, message: String| Error::Load {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut result: Option<CampaignResult> = None;
    let mut truncated = false;
    for (i, line) in lines[..=last].iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) if tolerate_tail && i == last && i > 0 => {
                log::warn!("{}:{}: dropping incomplete final record ({e})", path.display(), i + 1);
                truncated = true;
                break;
            }
            Err(e) => return Err(load_err(i + 1, e.to_string())),
        };
        match (&mut result, record) {
            (None, Record::Config { config }) => result = Some(CampaignResult::new(config)),
            (None, _) => return Err(load_err(i + 1, "log must start with a config record".into())),
            (Some(r), record) => r.apply(record).map_err(|m| load_err(i + 1, m))?,
        }
    }
    let result = result.ok_or_else(|| Error::EmptyResult(path.to_path_buf()))?;
    Ok((result, truncated))
}

/// Reads a complete log. Any malformed line is an error naming its number.
pub fn load_result(path: &Path) -> Result<CampaignResult> {
    read(path, false).map(|(r, _)| r)
}

/// Reads a possibly interrupted log, dropping an incomplete final line, and
/// rewrites the file to end at the last complete iteration.
pub fn recover(path: &Path) -> Result<CampaignResult> {
    let (result, truncated) = read(path, true)?;
    let state = result.resume_state();
    let kept = CampaignResult {
        config: result.config.clone(),
        observations: state.observations,
        iterations: state.summaries,
        outcome: None,
    };
    if truncated || kept != result {
        log::info!("{}: resuming after iteration {}", path.display(), kept.iterations.len());
    }
    write_result(path, &kept)?;
    Ok(kept)
}
