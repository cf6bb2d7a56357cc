//! Layered configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// TOML file with the same keys as the long flags (snake_case).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory for report.json, CSV tables and plot.svg.
    #[arg(long)]
    pub out: Option<String>,
    /// Do not write plot.svg.
    #[arg(long)]
    #[serde(skip)]
    pub no_plot: bool,
}

/// Default output directory.
pub const DEFAULT_OUT: &str = "mslab-out";

/// Resolves `defaults <- file <- flags`. `flags` is any serializable flag
/// record whose unset options serialize as `null`.
pub fn resolve<C, F>(defaults: &C, common: &CommonArgs, flags: &F) -> Result<C, CliError>
where
    C: Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = as_object(serde_json::to_value(defaults).expect("config serializes"));
    if let Some(path) = &common.config {
        for (k, v) in read_file(path)? {
            merged.insert(k, v);
        }
    }
    for (k, v) in as_object(serde_json::to_value(flags).expect("flags serialize")) {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    if common.no_plot {
        merged.insert("plot".into(), Value::Bool(false));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("configuration: {e}")))
}

fn as_object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {}", path.display(), e.message())))?;
    let value = serde_json::to_value(table).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    Ok(as_object(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        level: usize,
        map: String,
        out: String,
        plot: bool,
    }

    impl Default for Demo {
        fn default() -> Self {
            Demo {
                level: 3,
                map: "hopf3".into(),
                out: DEFAULT_OUT.into(),
                plot: true,
            }
        }
    }

    #[derive(Serialize)]
    struct DemoFlags {
        level: Option<usize>,
        map: Option<String>,
        #[serde(flatten)]
        common: CommonArgs,
    }

    fn common(config: Option<PathBuf>) -> CommonArgs {
        CommonArgs {
            config,
            out: None,
            no_plot: false,
        }
    }

    #[test]
    fn flags_win_over_file_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "level = 5\nmap = \"torus\"\nplot = false\n").unwrap();
        let flags = DemoFlags {
            level: Some(7),
            map: None,
            common: common(Some(path.clone())),
        };
        let c: Demo = resolve(&Demo::default(), &flags.common, &flags).unwrap();
        assert_eq!(c.level, 7);
        assert_eq!(c.map, "torus");
        assert!(!c.plot);
        assert_eq!(c.out, DEFAULT_OUT);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "levle = 5\n").unwrap();
        let flags = DemoFlags {
            level: None,
            map: None,
            common: common(Some(path)),
        };
        let e = resolve::<Demo, _>(&Demo::default(), &flags.common, &flags).unwrap_err();
        assert!(matches!(e, CliError::Usage(_)));
    }
}
