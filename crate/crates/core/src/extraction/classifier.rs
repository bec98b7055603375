//! Classifier interface, prompt rendering and reply parsing.

use regex::Regex;
use serde_json::Value;

use super::search::TextSpan;
use super::validation::Candidate;
use super::LogEntry;
use crate::error::{Error, Result};

pub const CLASSIFICATION_TEMPLATE: &str =
    "Return True if this text reports a statistic for {Statistic-name}. Otherwise return False Text: {text}";

const ADJUDICATION_LEAD: &str = "Several different values were extracted for";

/// Text-in, text-out model interface. `Err` is a transport failure and is
/// retried by the caller.
pub trait Classifier {
    fn complete(&mut self, prompt: &str) -> std::result::Result<String, String>;
}

/// Sends a prompt, retrying transport failures up to `retries` extra times.
pub fn ask(classifier: &mut dyn Classifier, prompt: &str, retries: usize) -> Result<String> {
    let mut last = String::new();
    for attempt in 0..=retries {
        match classifier.complete(prompt) {
            Ok(reply) => return Ok(reply),
            Err(e) => {
                log::warn!("classifier attempt {} failed: {e}", attempt + 1);
                last = e;
            }
        }
    }
    Err(Error::ClassificationUnavailable {
        attempts: retries + 1,
        reason: last,
    })
}

pub fn render_classification(template: &str, statistic: &str, text: &str) -> String {
    let prompt = template.replace("{Statistic-name}", statistic);
    if prompt.contains("{text}") {
        prompt.replace("{text}", text)
    } else {
        format!("{prompt}\nText: {text}")
    }
}

pub fn render_extraction(prompt: &str, record_format: &str, text: &str) -> String {
    format!("{prompt}\nReturn format: {record_format}\nText: {text}")
}

pub fn render_adjudication(statistic: &str, candidates: &[Candidate], date: &str, record_format: &str) -> String {
    let mut s = format!(
        "{ADJUDICATION_LEAD} {statistic}. Current date: {date}. Determine which value is the most recent and accurate \
         and return only that value in this format: {record_format}\nCandidates:"
    );
    for (i, c) in candidates.iter().enumerate() {
        s.push_str(&format!(
            "\n{}. value={}; unit={}; text={}",
            i + 1,
            c.value,
            c.unit.as_deref().unwrap_or(""),
            c.span.text.replace(['\n', '\r'], " ")
        ));
    }
    s
}

/// True/false verdict; anything else is treated as false with a warning.
pub fn parse_verdict(reply: &str, log: &mut Vec<LogEntry>) -> bool {
    let r = reply.trim().trim_end_matches('.').to_ascii_lowercase();
    match r.as_str() {
        "true" => true,
        "false" => false,
        _ => {
            log::warn!("malformed classifier verdict {reply:?}, treating as false");
            log.push(LogEntry::new("classify", format!("malformed verdict {reply:?} treated as false")));
            false
        }
    }
}

pub fn classify_relevant(
    classifier: &mut dyn Classifier,
    template: &str,
    statistic: &str,
    text: &str,
    retries: usize,
    log: &mut Vec<LogEntry>,
) -> Result<bool> {
    if text.trim().is_empty() {
        return Ok(false);
    }
    let reply = ask(classifier, &render_classification(template, statistic, text), retries)?;
    Ok(parse_verdict(&reply, log))
}

/// Structured records from a reply: one JSON object or an array of
/// objects, each with a numeric `value` and optional string `unit`.
pub fn parse_records(reply: &str, log: &mut Vec<LogEntry>) -> Vec<(f64, Option<String>)> {
    let body = reply.trim();
    let body = body
        .strip_prefix("```json")
        .or_else(|| body.strip_prefix("```"))
        .map(|b| b.trim_end().trim_end_matches("```"))
        .unwrap_or(body)
        .trim();
    let parsed: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(e) => {
            log.push(LogEntry::new("extract", format!("unparseable reply ({e}): {reply:?}")));
            return Vec::new();
        }
    };
    let items = match parsed {
        Value::Array(items) => items,
        other => vec![other],
    };
    let mut out = Vec::new();
    for item in items {
        match item.get("value").and_then(Value::as_f64) {
            Some(v) if v.is_finite() => {
                let unit = item.get("unit").and_then(Value::as_str).map(str::to_string);
                out.push((v, unit));
            }
            _ => log.push(LogEntry::new("extract", format!("record without numeric value: {item}"))),
        }
    }
    out
}

pub fn extract_statistic(
    classifier: &mut dyn Classifier,
    extraction_prompt: &str,
    record_format: &str,
    span: &TextSpan,
    retries: usize,
    log: &mut Vec<LogEntry>,
) -> Result<Vec<Candidate>> {
    let reply = ask(classifier, &render_extraction(extraction_prompt, record_format, &span.text), retries)?;
    Ok(parse_records(&reply, log)
        .into_iter()
        .map(|(value, unit)| Candidate {
            value,
            unit,
            span: span.clone(),
        })
        .collect())
}

/// Deterministic stand-in for a language model, driven by keyword rules.
///
/// * classification: true iff the statistic's keyword occurs as a whole
///   word and the text contains a digit;
/// * extraction: the rule whose statistic name occurs in the instruction
///   picks `keyword ... number [unit]` matches out of the text;
/// * adjudication: the candidate whose source text mentions the latest
///   four-digit year wins; ties are left unresolved.
#[derive(Debug, Clone, Default)]
pub struct KeywordRuleClassifier {
    rules: Vec<(String, Regex)>,
    fail_first: usize,
    pub calls: usize,
}

fn word_regex(keyword: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(keyword))).expect("escaped keyword is a valid regex")
}

impl KeywordRuleClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, statistic: &str, keyword: &str) -> Self {
        self.rules.push((statistic.to_string(), word_regex(keyword)));
        self
    }

    /// Fails the first `n` calls with a transport error.
    pub fn failing_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    fn keyword_for(&self, statistic: &str) -> Regex {
        self.rules
            .iter()
            .find(|(s, _)| s.eq_ignore_ascii_case(statistic))
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| word_regex(statistic))
    }

    fn classify(&self, prompt: &str) -> String {
        let lead = "Return True if this text reports a statistic for ";
        let rest = &prompt[lead.len()..];
        let (statistic, text) = match rest.split_once(". Otherwise return False Text: ") {
            Some(parts) => parts,
            None => return "unsure".into(),
        };
        let hit = self.keyword_for(statistic).is_match(text) && text.chars().any(|c| c.is_ascii_digit());
        if hit { "True" } else { "False" }.into()
    }

    fn extract(&self, prompt: &str) -> String {
        let Some((instruction, text)) = prompt.rsplit_once("\nText: ") else {
            return "no text".into();
        };
        let lower = instruction.to_lowercase();
        let Some((_, kw)) = self.rules.iter().find(|(s, _)| lower.contains(&s.to_lowercase())) else {
            return "[]".into();
        };
        let pattern = format!(
            r"{}[^0-9\n]{{0,40}}?(\d[\d,]*(?:\.\d+)?)(?:\s+([A-Za-z%]+))?",
            kw.as_str()
        );
        let re = Regex::new(&pattern).expect("rule pattern is valid");
        let records: Vec<Value> = re
            .captures_iter(text)
            .filter_map(|c| {
                let v: f64 = c[1].replace(',', "").parse().ok()?;
                let mut rec = serde_json::json!({ "value": v });
                if let Some(u) = c.get(2) {
                    rec["unit"] = Value::String(u.as_str().to_string());
                }
                Some(rec)
            })
            .collect();
        match records.len() {
            1 => records[0].to_string(),
            _ => Value::Array(records).to_string(),
        }
    }

    fn adjudicate(&self, prompt: &str) -> String {
        let line = Regex::new(r"(?m)^\d+\. value=([^;]*); unit=([^;]*); text=(.*)$").expect("valid");
        let year = Regex::new(r"\b(?:19|20)\d\d\b").expect("valid");
        let mut best: Option<(u32, &str, &str)> = None;
        let mut tied = false;
        for c in line.captures_iter(prompt) {
            let latest = year
                .find_iter(c.get(3).map_or("", |m| m.as_str()))
                .filter_map(|m| m.as_str().parse::<u32>().ok())
                .max();
            let Some(y) = latest else { continue };
            let (v, u) = (c.get(1).map_or("", |m| m.as_str()), c.get(2).map_or("", |m| m.as_str()));
            match best {
                Some((b, bv, bu)) if y == b => tied |= (v, u) != (bv, bu),
                Some((b, _, _)) if y < b => {}
                _ => {
                    best = Some((y, v, u));
                    tied = false;
                }
            }
        }
        match best {
            Some((_, v, u)) if !tied => match v.parse::<f64>() {
                Ok(value) if u.is_empty() => serde_json::json!({ "value": value }).to_string(),
                Ok(value) => serde_json::json!({ "value": value, "unit": u }).to_string(),
                Err(_) => "cannot determine".into(),
            },
            _ => "cannot determine".into(),
        }
    }
}

impl Classifier for KeywordRuleClassifier {
    fn complete(&mut self, prompt: &str) -> std::result::Result<String, String> {
        self.calls += 1;
        if self.calls <= self.fail_first {
            return Err(format!("simulated transport failure {}", self.calls));
        }
        Ok(if prompt.starts_with("Return True if this text reports a statistic for ") {
            self.classify(prompt)
        } else if prompt.starts_with(ADJUDICATION_LEAD) {
            self.adjudicate(prompt)
        } else {
            self.extract(prompt)
        })
    }
}
