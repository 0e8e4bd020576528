use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use cruise_core::io::write_json;
use cruise_core::ocp::Scenario;

use crate::commands::Fail;

pub const REPORT_FILE: &str = "report.json";

/// Self-contained record of one invocation: inputs with defaults filled in,
/// numeric summary and the tables written next to it.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool_version: &'static str,
    pub command: &'static str,
    /// Parsed command-line arguments.
    pub args: Value,
    pub scenario: Option<Scenario>,
    /// Solver or study configuration actually used.
    pub config: Value,
    pub summary: Value,
    /// Files in the run directory, relative to it.
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: &'static str, args: &impl Serialize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            args: serde_json::to_value(args).unwrap_or(Value::Null),
            scenario: None,
            config: Value::Null,
            summary: Value::Null,
            files: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<(), Fail> {
        self.files.push(REPORT_FILE.into());
        write_json(&dir.join(REPORT_FILE), self)?;
        Ok(())
    }
}

/// `<root>/<command>-<label>`, created if missing. Reruns overwrite.
pub fn run_dir(root: &Path, command: &str, label: &str) -> Result<PathBuf, Fail> {
    let clean: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    let dir = if clean.is_empty() {
        root.join(command)
    } else {
        root.join(format!("{command}-{clean}"))
    };
    std::fs::create_dir_all(&dir).map_err(|e| Fail::Input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}
