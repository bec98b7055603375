//! End-to-end computation of one indicator for one element.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::classifier::{classify_relevant, extract_statistic, Classifier};
use super::definition::{IndicatorDefinition, Source, StatisticDef};
use super::formula::eval_formula;
use super::retrieval::{resolve_periodical, Attempt, Fetcher};
use super::search::{header_search, keyword_proximity_search, page_span, HeaderRules, TextSpan};
use super::validation::{validate, Case, ExtractionOutcome};
use super::{substitute_placeholders, LogEntry};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Proximity window in characters.
    pub window: usize,
    pub header: HeaderRules,
    pub max_year_iterations: usize,
    pub retries: usize,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            window: 500,
            header: HeaderRules::default(),
            max_year_iterations: 5,
            retries: 2,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticReport {
    pub statistic: String,
    pub attempts: Vec<Attempt>,
    pub outcome: ExtractionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IndicatorValue {
    Computed { value: f64 },
    Skipped { statistic: Option<String>, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub indicator: String,
    pub element: String,
    pub year: i32,
    pub result: IndicatorValue,
    pub statistics: Vec<StatisticReport>,
    pub log: Vec<LogEntry>,
}

/// Retrieve, reduce, classify, extract and validate every statistic, then
/// evaluate the calculation. A statistic without a value skips the
/// indicator.
pub fn compute_indicator(
    def: &IndicatorDefinition,
    element: &str,
    year: i32,
    date: &str,
    fetcher: &mut dyn Fetcher,
    classifier: &mut dyn Classifier,
    config: &ExtractionConfig,
) -> Result<IndicatorReport> {
    let mut report = IndicatorReport {
        indicator: def.name.clone(),
        element: element.to_string(),
        year,
        result: IndicatorValue::Skipped {
            statistic: None,
            reason: "not evaluated".into(),
        },
        statistics: Vec::new(),
        log: Vec::new(),
    };
    let mut bindings = HashMap::new();
    for stat in &def.statistics {
        let s = statistic(stat, element, year, date, fetcher, classifier, config)?;
        report.log.extend(s.outcome.log.iter().cloned());
        let value = s.outcome.value;
        let name = stat.statistic_name.clone();
        report.statistics.push(s);
        match value {
            Some(v) => {
                bindings.insert(name, v);
            }
            None => {
                report.log.push(LogEntry::new("indicator", format!("{}: skipped, no value for '{name}'", def.name)));
                report.result = IndicatorValue::Skipped {
                    statistic: Some(name),
                    reason: "no value found".into(),
                };
                return Ok(report);
            }
        }
    }
    let formula = substitute_placeholders(&def.calculation, Some(element), Some(year));
    report.result = match eval_formula(&formula, &bindings) {
        Ok(value) => {
            report.log.push(LogEntry::new("indicator", format!("{} = {value}", def.name)));
            IndicatorValue::Computed { value }
        }
        Err(e) => {
            report.log.push(LogEntry::new("indicator", format!("{}: skipped, {e}", def.name)));
            IndicatorValue::Skipped {
                statistic: None,
                reason: e.to_string(),
            }
        }
    };
    Ok(report)
}

fn statistic(
    stat: &StatisticDef,
    element: &str,
    year: i32,
    date: &str,
    fetcher: &mut dyn Fetcher,
    classifier: &mut dyn Classifier,
    config: &ExtractionConfig,
) -> Result<StatisticReport> {
    let sub = |t: &str| substitute_placeholders(t, Some(element), Some(year));
    let name = stat.statistic_name.clone();
    let format = stat.record_format();
    let mut log = Vec::new();
    let url_template = match &stat.source {
        Source::Direct { direct_url_template } => substitute_placeholders(direct_url_template, Some(element), None),
        Source::Search { .. } => {
            log.push(LogEntry::new("retrieve", format!("{name}: search-based sources are not supported")));
            let mut outcome = validate(&name, Vec::new(), classifier, &format, date, config.retries)?;
            log.append(&mut outcome.log);
            outcome.log = log;
            return Ok(StatisticReport {
                statistic: name,
                attempts: Vec::new(),
                outcome,
            });
        }
    };
    let retrieval = resolve_periodical(
        &url_template,
        year,
        config.max_year_iterations,
        fetcher,
        config.cache_dir.as_deref(),
    )?;
    for a in &retrieval.attempts {
        log.push(LogEntry::new("retrieve", format!("{name}: {} {:?}", a.url, a.status)));
    }

    let mut candidates = Vec::new();
    if let Some(doc) = &retrieval.document {
        let mut keywords = vec![element.to_string()];
        keywords.extend(stat.search_keywords().iter().map(|k| sub(k)));
        let mut spans: Vec<TextSpan> = keyword_proximity_search(doc, &keywords, config.window);
        let pages = doc.pages();
        for p in header_search(&pages, &keywords[..1], &config.header) {
            let span = page_span(doc, &pages[p], &keywords);
            if !spans.iter().any(|s| s.start == span.start && s.end == span.end) {
                spans.push(span);
            }
        }
        log.push(LogEntry::new("reduce", format!("{name}: {} candidate span(s) in {}", spans.len(), doc.id)));
        let prompt = sub(&stat.extraction_prompt);
        for span in &spans {
            let template = sub(&stat.classification_prompt);
            if classify_relevant(classifier, &template, &name, &span.text, config.retries, &mut log)? {
                log.push(LogEntry::new("classify", format!("{name}: span {}..{} relevant", span.start, span.end)));
                candidates.extend(extract_statistic(classifier, &prompt, &format, span, config.retries, &mut log)?);
            } else {
                log.push(LogEntry::new("classify", format!("{name}: span {}..{} discarded", span.start, span.end)));
            }
        }
    } else {
        log.push(LogEntry::new("retrieve", format!("{name}: no document found")));
    }
    let mut outcome = validate(&name, candidates, classifier, &format, date, config.retries)?;
    log.append(&mut outcome.log);
    outcome.log = log;
    debug_assert!(outcome.case != Case::C || outcome.value.is_none());
    Ok(StatisticReport {
        statistic: name,
        attempts: retrieval.attempts,
        outcome,
    })
}
