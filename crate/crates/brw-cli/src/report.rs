//! Run reports and table emission. Data tables are CSV (or JSONL rows on
//! request) and must be byte-identical across reruns and thread counts;
//! run metadata goes to a JSONL sidecar and carries the wall clock, so only
//! the tables are reproducible byte for byte.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

/// One reported statistic, with its target and pass flag when the
/// experiment configures them.
#[derive(Clone, Debug, Serialize)]
pub struct StatLine {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl StatLine {
    pub fn info(name: impl Into<String>, estimate: f64, se: f64) -> Self {
        StatLine {
            name: name.into(),
            estimate,
            standard_error: se,
            target: None,
            tolerance: None,
            pass: None,
        }
    }

    pub fn checked(
        name: impl Into<String>,
        estimate: f64,
        se: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    ) -> Self {
        StatLine {
            name: name.into(),
            estimate,
            standard_error: se,
            target: Some(target),
            tolerance: Some(tolerance),
            pass: Some(pass),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub params: serde_json::Value,
    pub stats: Vec<StatLine>,
    pub wall_clock_secs: f64,
    /// Conjunction of all configured pass flags; absent when nothing is
    /// checked.
    pub pass: Option<bool>,
}

impl RunReport {
    pub fn new(experiment: &str, config_hash: &str, seed: u64, params: serde_json::Value) -> Self {
        RunReport {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            params,
            stats: Vec::new(),
            wall_clock_secs: 0.0,
            pass: None,
        }
    }

    pub fn push(&mut self, line: StatLine) {
        self.stats.push(line);
    }

    pub fn finalize(&mut self, started: std::time::Instant) {
        self.wall_clock_secs = started.elapsed().as_secs_f64();
        let flags: Vec<bool> = self.stats.iter().filter_map(|s| s.pass).collect();
        self.pass = if flags.is_empty() {
            None
        } else {
            Some(flags.iter().all(|&b| b))
        };
    }

    pub fn print_summary(&self) {
        println!("# {} (config {}, seed {})", self.experiment, self.config_hash, self.seed);
        for s in &self.stats {
            let flag = match s.pass {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "    ",
            };
            match s.target {
                Some(t) => println!(
                    "[{flag}] {:<42} {:>14.6} +- {:<12.6} target {:>12.6}",
                    s.name, s.estimate, s.standard_error, t
                ),
                None => println!(
                    "[{flag}] {:<42} {:>14.6} +- {:<12.6}",
                    s.name, s.estimate, s.standard_error
                ),
            }
        }
        if let Some(p) = self.pass {
            println!("overall: {}", if p { "pass" } else { "FAIL" });
        }
    }

    /// Append the report to `<out>/<experiment>_meta.jsonl`.
    pub fn write_meta(&self, out_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(format!("{}_meta.jsonl", self.experiment));
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(self).expect("report serializes");
        writeln!(file, "{line}")?;
        Ok(())
    }
}

/// Table writer with deterministic formatting: CSV by default, JSONL rows
/// on request. Floats use Rust's shortest round-trip representation.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn write(&self, out_dir: &Path, name: &str, format: OutputFormat) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(out_dir)?;
        match format {
            OutputFormat::Csv => {
                let path = out_dir.join(format!("{name}.csv"));
                let mut w = csv::Writer::from_writer(File::create(&path)?);
                w.write_record(&self.header)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                for row in &self.rows {
                    w.write_record(row).map_err(|e| CliError::Other(e.to_string()))?;
                }
                w.flush()?;
                Ok(path)
            }
            OutputFormat::Jsonl => {
                let path = out_dir.join(format!("{name}.jsonl"));
                let mut file = File::create(&path)?;
                for row in &self.rows {
                    let obj: serde_json::Map<String, serde_json::Value> = self
                        .header
                        .iter()
                        .zip(row)
                        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                        .collect();
                    writeln!(file, "{}", serde_json::Value::Object(obj))?;
                }
                Ok(path)
            }
        }
    }
}

/// Shortest round-trip decimal form of a float; deterministic across runs
/// and thread counts for identical bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
