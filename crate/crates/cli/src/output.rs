//! Artifact writing: report.json, CSV tables and plot.svg.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::svg::LinePlot;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Report<'a, C: Serialize> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'a str,
    config: &'a C,
    results: &'a Value,
    /// The only field that differs between identical runs.
    timestamp: String,
}

pub struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    pub fn create(dir: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Artifacts { dir })
    }

    pub fn report<C: Serialize>(&self, command: &str, config: &C, results: &Value) -> Result<(), CliError> {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            tool: "mslab",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            results,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Core(e.into()))?;
        text.push('\n');
        self.write("report.json", text.as_bytes())
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))
    }

    pub fn plot(&self, enabled: bool, plot: &LinePlot) -> Result<(), CliError> {
        if enabled {
            self.write("plot.svg", plot.render().as_bytes())?;
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string(value).map_err(|e| CliError::Core(e.into()))?;
        self.write(name, text.as_bytes())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(mslab::Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Core(mslab::Error::Io(format!("{}: {e}", path.display())))
}
