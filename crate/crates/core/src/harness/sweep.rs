use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::run::{execute, Summary};
use super::scenario::{set_numeric, Scenario};
use crate::error::{Error, Result};

/// One summary per axis value, in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<(f64, Summary)>,
}

impl SweepTable {
    /// Tab-separated table: the axis value followed by every numeric
    /// summary entry of the first row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let Some((_, first)) = self.rows.first() else {
            let _ = writeln!(out, "# {}", self.axis);
            return out;
        };
        let keys: Vec<&str> = first
            .entries()
            .iter()
            .filter(|(_, v)| v.parse::<f64>().is_ok())
            .map(|(k, _)| k.as_str())
            .collect();
        let _ = writeln!(out, "# {}\t{}", self.axis, keys.join("\t"));
        for (value, summary) in &self.rows {
            let cells: Vec<&str> = keys
                .iter()
                .map(|k| summary.get(k).unwrap_or("n/a"))
                .collect();
            let _ = writeln!(out, "{value}\t{}", cells.join("\t"));
        }
        out
    }
}

/// Scenario text with the numeric field at `axis` (dotted path) replaced.
pub fn override_scenario(text: &str, origin: &Path, axis: &str, value: f64) -> Result<Scenario> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: e.message().to_string(),
    })?;
    set_numeric(&mut doc, axis, value)?;
    let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    Scenario::from_toml(&text, origin)
        .map_err(|e| Error::Config(format!("axis '{axis}' = {value}: {e}")))
}

/// Runs the scenario once per value of `axis`, in parallel.
pub fn sweep(path: &Path, axis: &str, values: &[f64], seed: Option<u64>) -> Result<SweepTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::from_toml(&text, path)?;
    let rows = values
        .par_iter()
        .map(|&v| -> Result<(f64, Summary)> {
            let mut scenario = override_scenario(&text, path, axis, v)?;
            if let Some(s) = seed {
                scenario.seed = s;
            }
            Ok((v, execute(&scenario, base)?.summary))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axis: axis.to_string(),
        rows,
    })
}
