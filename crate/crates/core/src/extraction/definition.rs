//! Indicator definition files.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::classifier::CLASSIFICATION_TEMPLATE;
use super::formula::identifiers;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Direct { direct_url_template: String },
    Search { search_terms: Vec<String>, search_url: String },
}

fn default_template() -> String {
    CLASSIFICATION_TEMPLATE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticDef {
    pub statistic_name: String,
    pub source: Source,
    #[serde(default = "default_template")]
    pub classification_prompt: String,
    pub extraction_prompt: String,
    pub expected_record_format: Value,
    /// Search keywords besides the element name.
    #[serde(default)]
    pub keywords: Vec<String>,
}

impl StatisticDef {
    pub fn record_format(&self) -> String {
        match &self.expected_record_format {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    pub fn search_keywords(&self) -> Vec<String> {
        if self.keywords.is_empty() {
            vec![self.statistic_name.clone()]
        } else {
            self.keywords.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorDefinition {
    pub name: String,
    pub statistics: Vec<StatisticDef>,
    pub calculation: String,
}

impl IndicatorDefinition {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.statistics {
            if !seen.insert(s.statistic_name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "indicator '{}': duplicate statistic '{}'",
                    self.name, s.statistic_name
                )));
            }
        }
        let mut texts: Vec<&str> = vec![&self.calculation];
        for s in &self.statistics {
            texts.extend([s.extraction_prompt.as_str(), s.classification_prompt.as_str()]);
            match &s.source {
                Source::Direct { direct_url_template } => texts.push(direct_url_template),
                Source::Search { search_terms, search_url } => {
                    texts.push(search_url);
                    texts.extend(search_terms.iter().map(String::as_str));
                }
            }
        }
        let placeholder = Regex::new(r"@(\w*)").expect("valid");
        for t in texts {
            for c in placeholder.captures_iter(t) {
                if !matches!(&c[1], "Element" | "Year") {
                    return Err(Error::InvalidData(format!(
                        "indicator '{}': unknown placeholder '@{}'",
                        self.name, &c[1]
                    )));
                }
            }
        }
        let names = identifiers(&self.calculation).map_err(|e| {
            Error::InvalidData(format!("indicator '{}': calculation: {e}", self.name))
        })?;
        for n in names {
            if !seen.contains(n.as_str()) {
                return Err(Error::InvalidData(format!(
                    "indicator '{}': calculation uses undefined statistic '{n}'",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, source: &Path) -> Result<Self> {
        let def: IndicatorDefinition = serde_json::from_str(text).map_err(|e| Error::file(source, e))?;
        def.validate().map_err(|e| Error::file(source, e))?;
        Ok(def)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Every `*.json` definition in a directory, ordered by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, IndicatorDefinition)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::file(dir, "no indicator definitions (*.json) found"));
    }
    paths
        .into_iter()
        .map(|p| IndicatorDefinition::load(&p).map(|d| (p, d)))
        .collect()
}
