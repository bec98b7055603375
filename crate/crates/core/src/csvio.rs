//! Header-driven CSV reading with row/column diagnostics.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};

pub(crate) struct Table {
    pub source: String,
    columns: HashMap<String, usize>,
    pub rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    pub fn read<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidData(format!("{source}: {e}")))?
            .clone();
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::InvalidData(format!("{source}: {e}")))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Table {
            source: source.to_string(),
            columns,
            rows,
        })
    }

    pub fn require_columns(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<&str> = names
            .iter()
            .copied()
            .filter(|n| !self.columns.contains_key(*n))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidData(format!(
                "{}: missing column(s) {}",
                self.source,
                missing.join(", ")
            )))
        }
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn cell<'a>(&self, rec: &'a csv::StringRecord, column: &str) -> Option<&'a str> {
        self.columns
            .get(column)
            .and_then(|&i| rec.get(i))
            .filter(|s| !s.is_empty())
    }
}

/// Accumulates per-cell defects so a loader can report all of them at once.
#[derive(Default)]
pub(crate) struct Defects(Vec<String>);

impl Defects {
    pub fn push(&mut self, line: usize, column: &str, msg: impl std::fmt::Display) {
        self.0.push(format!("line {line}, column {column}: {msg}"));
    }

    pub fn finish(self, source: &str) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidData(format!("{source}: {}", self.0.join("; "))))
        }
    }
}
