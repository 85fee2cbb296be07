use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::Format;
use crate::{usage, Fail};

/// A report rendered both ways; written once the command has succeeded.
pub struct Emit {
    json: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Emit {
    pub fn new<T: Serialize>(report: &T, headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, Fail> {
        let json = serde_json::to_string_pretty(report).map_err(|e| Fail { code: 3, message: format!("cannot serialise report: {e}") })?;
        Ok(Self { json, headers, rows })
    }

    fn render(&self, format: Format) -> Result<Vec<u8>, Fail> {
        match format {
            Format::Json => Ok(format!("{}\n", self.json).into_bytes()),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| usage(format!("cannot write CSV: {e}"));
                w.write_record(&self.headers).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r).map_err(io)?;
                }
                w.into_inner().map_err(|e| usage(format!("cannot write CSV: {e}")))
            }
        }
    }

    pub fn write(&self, format: Format, path: Option<&Path>) -> Result<(), Fail> {
        let bytes = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, bytes).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
            None => std::io::stdout().write_all(&bytes).map_err(|e| usage(format!("cannot write output: {e}"))),
        }
    }
}
