use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::Format;
use crate::CliError;

/// A table with a JSON rendering of the full result alongside it.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Seventeen significant digits, so values round-trip exactly.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit<T: Serialize>(table: &Table, json: &T, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let bytes = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.header).map_err(io)?;
            for r in &table.rows {
                w.write_record(r).map_err(io)?;
            }
            w.into_inner().map_err(|e| io(e.into_error()))?
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(json).map_err(|e| CliError::Numeric(format!("cli::run: {e}")))?;
            v.push(b'\n');
            v
        }
    };
    write_bytes(&bytes, out)
}

/// Writes to `out`, or standard output when absent. A closed pipe is not an error.
pub fn write_bytes(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    let result = match out {
        Some(p) => {
            return std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("cli::run: writing {}: {e}", p.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush())
        }
    };
    match result {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(io),
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("cli::run: {e}"))
}
