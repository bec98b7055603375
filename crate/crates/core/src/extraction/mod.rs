//! Extraction of indicator statistics from documents.

pub mod classifier;
pub mod definition;
pub mod formula;
pub mod pipeline;
pub mod retrieval;
pub mod search;
pub mod validation;

use serde::{Deserialize, Serialize};

pub use classifier::{classify_relevant, extract_statistic, Classifier, KeywordRuleClassifier, CLASSIFICATION_TEMPLATE};
pub use definition::{IndicatorDefinition, Source, StatisticDef};
pub use formula::{eval_formula, FormulaError};
pub use pipeline::{compute_indicator, ExtractionConfig, IndicatorReport, IndicatorValue};
pub use retrieval::{resolve_periodical, DirFetcher, Fetcher, MapFetcher};
pub use search::{header_search, keyword_proximity_search, Document, Page, TextSpan};
pub use validation::{validate, Candidate, Case, ExtractionOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    pub message: String,
}

impl LogEntry {
    pub fn new(stage: &str, message: String) -> Self {
        LogEntry {
            stage: stage.to_string(),
            message,
        }
    }
}

/// Replaces `@Element` and `@Year` where a value is given.
pub fn substitute_placeholders(template: &str, element: Option<&str>, year: Option<i32>) -> String {
    let mut out = template.to_string();
    if let Some(e) = element {
        out = out.replace("@Element", e);
    }
    if let Some(y) = year {
        out = out.replace("@Year", &y.to_string());
    }
    out
}
