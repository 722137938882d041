use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const REPORT_DIR_ENV: &str = "BNNSIM_REPORT_DIR";

/// Everything needed to rerun a command, embedded in each report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub model: String,
    pub inputs: Vec<String>,
    pub hardware: serde_json::Value,
    pub options: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, model: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            model: model.display().to_string(),
            inputs: Vec::new(),
            hardware: serde_json::Value::Null,
            options: serde_json::Value::Null,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION"),
            outputs: Vec::new(),
        }
    }
}

pub fn report_dir() -> Option<PathBuf> {
    std::env::var_os(REPORT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// The explicit path, else `file` inside the report directory if one is set.
pub fn report_path(explicit: &Option<PathBuf>, file: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| report_dir().map(|d| d.join(file)))
}

pub fn output_dir(explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().or_else(report_dir).unwrap_or_else(|| PathBuf::from("."))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
