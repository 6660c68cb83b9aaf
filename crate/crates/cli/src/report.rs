//! Machine-readable command reports.
//!
//! `inputs`, `outputs` and `warnings` form the deterministic section:
//! identical inputs give byte-identical JSON there. Numeric fields carry
//! their unit as a name suffix (`_MHz`, `_ns`, `_dB`, ...); unsuffixed
//! numbers are dimensionless.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const TOOL: &str = "cavspin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// Command line as given, without the program name.
    pub command: Vec<String>,
    /// True when `inputs`, `outputs` and `warnings` depend only on the
    /// command inputs.
    pub deterministic: bool,
    pub inputs: Value,
    pub outputs: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: Vec<String>, inputs: Value, outputs: Value, warnings: Vec<String>) -> Self {
        Report {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            deterministic: true,
            inputs,
            outputs,
            warnings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are plain JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("report: {e}")))
    }

    /// Serialized deterministic section.
    pub fn deterministic_section(&self) -> String {
        serde_json::to_string(&(&self.inputs, &self.outputs, &self.warnings)).expect("plain JSON")
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json() + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// JSON for a float; non-finite values become `null`.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// Builds a JSON object from `(key, value)` pairs.
#[macro_export]
macro_rules! obj {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = serde_json::Map::new();
        $( m.insert(($k).to_string(), serde_json::to_value($v).unwrap_or(serde_json::Value::Null)); )*
        serde_json::Value::Object(m)
    }};
}
