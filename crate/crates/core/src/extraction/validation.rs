//! Reconciling extracted candidates into a single statistic.

use serde::{Deserialize, Serialize};

use super::classifier::{ask, parse_records, render_adjudication, Classifier};
use super::search::TextSpan;
use super::LogEntry;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: f64,
    pub unit: Option<String>,
    pub span: TextSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutcome {
    pub case: Case,
    pub value: Option<f64>,
    pub unit: Option<String>,
    /// Span the accepted value was read from.
    pub source: Option<TextSpan>,
    pub adjudicated: bool,
    pub candidates: Vec<Candidate>,
    pub log: Vec<LogEntry>,
}

impl ExtractionOutcome {
    fn accepted(case: Case, pick: &Candidate, candidates: Vec<Candidate>, adjudicated: bool, log: Vec<LogEntry>) -> Self {
        ExtractionOutcome {
            case,
            value: Some(pick.value),
            unit: pick.unit.clone(),
            source: Some(pick.span.clone()),
            adjudicated,
            candidates,
            log,
        }
    }

    fn absent(candidates: Vec<Candidate>, log: Vec<LogEntry>) -> Self {
        ExtractionOutcome {
            case: Case::C,
            value: None,
            unit: None,
            source: None,
            adjudicated: false,
            candidates,
            log,
        }
    }
}

fn same(a: &Candidate, b: &Candidate) -> bool {
    a.value == b.value && a.unit == b.unit
}

/// One candidate: case A. Several identical (value and unit): case B.
/// Several differing: one adjudication query, accepted only when it names a
/// single value that matches one of the candidates. Otherwise case C.
pub fn validate(
    statistic: &str,
    candidates: Vec<Candidate>,
    classifier: &mut dyn Classifier,
    record_format: &str,
    date: &str,
    retries: usize,
) -> Result<ExtractionOutcome> {
    let mut log = Vec::new();
    match candidates.len() {
        0 => {
            log.push(LogEntry::new("validate", format!("{statistic}: no values found (case C)")));
            Ok(ExtractionOutcome::absent(candidates, log))
        }
        1 => {
            log.push(LogEntry::new("validate", format!("{statistic}: single value {} (case A)", candidates[0].value)));
            let pick = candidates[0].clone();
            Ok(ExtractionOutcome::accepted(Case::A, &pick, candidates, false, log))
        }
        n if candidates.iter().all(|c| same(c, &candidates[0])) => {
            log.push(LogEntry::new(
                "validate",
                format!("{statistic}: {n} identical values {} (case B)", candidates[0].value),
            ));
            let pick = candidates[0].clone();
            Ok(ExtractionOutcome::accepted(Case::B, &pick, candidates, false, log))
        }
        n => {
            log.push(LogEntry::new(
                "validate",
                format!("{statistic}: {n} differing values, asking for adjudication"),
            ));
            let reply = ask(
                classifier,
                &render_adjudication(statistic, &candidates, date, record_format),
                retries,
            )?;
            let records = parse_records(&reply, &mut log);
            let chosen = match records.as_slice() {
                [(v, u)] => candidates.iter().find(|c| c.value == *v && c.unit == *u).cloned(),
                _ => None,
            };
            match chosen {
                Some(pick) => {
                    log.push(LogEntry::new(
                        "validate",
                        format!("{statistic}: adjudication selected {} (case B)", pick.value),
                    ));
                    Ok(ExtractionOutcome::accepted(Case::B, &pick, candidates, true, log))
                }
                None => {
                    log.push(LogEntry::new(
                        "validate",
                        format!("{statistic}: adjudication did not single out a candidate (case C)"),
                    ));
                    Ok(ExtractionOutcome::absent(candidates, log))
                }
            }
        }
    }
}
