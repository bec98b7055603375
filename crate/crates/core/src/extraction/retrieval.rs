//! Document retrieval with a year walk-down for periodicals.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::search::Document;
use super::substitute_placeholders;
use crate::error::{Error, Result};

/// Pluggable document source. `Err` carries the failure reason for one
/// request (missing document, transport error, ...).
pub trait Fetcher {
    fn fetch(&mut self, url: &str) -> std::result::Result<String, String>;
}

/// In-memory fetcher keyed by exact URL; records every request.
#[derive(Debug, Default, Clone)]
pub struct MapFetcher {
    docs: HashMap<String, String>,
    pub requests: Vec<String>,
}

impl MapFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, url: &str, text: &str) -> Self {
        self.docs.insert(url.to_string(), text.to_string());
        self
    }
}

impl Fetcher for MapFetcher {
    fn fetch(&mut self, url: &str) -> std::result::Result<String, String> {
        self.requests.push(url.to_string());
        self.docs
            .get(url)
            .cloned()
            .ok_or_else(|| format!("404 not found: {url}"))
    }
}

/// Serves files from a directory by the final path segment of the URL.
#[derive(Debug, Clone)]
pub struct DirFetcher {
    root: PathBuf,
}

impl DirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirFetcher { root: root.into() }
    }
}

impl Fetcher for DirFetcher {
    fn fetch(&mut self, url: &str) -> std::result::Result<String, String> {
        let path = self.root.join(file_name(url));
        fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Final path segment of a URL, without query or fragment.
pub fn file_name(url: &str) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    path.rsplit('/').next().unwrap_or(path).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum AttemptStatus {
    Cached,
    Fetched,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub year: i32,
    pub url: String,
    #[serde(flatten)]
    pub status: AttemptStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub document: Option<Document>,
    pub attempts: Vec<Attempt>,
}

/// Tries `start_year`, `start_year - 1`, ... substituting `@Year`, and
/// returns the first document found. A template without `@Year` is tried
/// once, verbatim. With a cache directory, a local file of the same name is
/// used instead of fetching, and fetched documents are stored there.
pub fn resolve_periodical(
    url_template: &str,
    start_year: i32,
    max_iterations: usize,
    fetcher: &mut dyn Fetcher,
    cache: Option<&Path>,
) -> Result<Retrieval> {
    let tries = if url_template.contains("@Year") {
        max_iterations
    } else {
        max_iterations.min(1)
    };
    let mut attempts = Vec::new();
    for i in 0..tries {
        let year = start_year - i as i32;
        let url = substitute_placeholders(url_template, None, Some(year));
        let name = file_name(&url);
        if let Some(dir) = cache {
            let local = dir.join(&name);
            if local.is_file() {
                let text = fs::read_to_string(&local).map_err(|e| Error::file(&local, e))?;
                attempts.push(Attempt { year, url, status: AttemptStatus::Cached });
                return Ok(Retrieval {
                    document: Some(Document::new(name, &text)),
                    attempts,
                });
            }
        }
        match fetcher.fetch(&url) {
            Ok(text) => {
                if let Some(dir) = cache {
                    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
                    let local = dir.join(&name);
                    fs::write(&local, &text).map_err(|e| Error::file(&local, e))?;
                }
                log::info!("retrieved {url}");
                attempts.push(Attempt { year, url, status: AttemptStatus::Fetched });
                return Ok(Retrieval {
                    document: Some(Document::new(name, &text)),
                    attempts,
                });
            }
            Err(reason) => {
                log::info!("no publication for {year}: {reason}");
                attempts.push(Attempt {
                    year,
                    url,
                    status: AttemptStatus::Failed(reason),
                });
            }
        }
    }
    Ok(Retrieval {
        document: None,
        attempts,
    })
}
