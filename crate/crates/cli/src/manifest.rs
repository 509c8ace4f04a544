//! Run manifests: the resolved command, tool version, timing and outputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "mfbm";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Worker threads used; outputs do not depend on it.
    pub threads: Option<usize>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: Command, threads: Option<usize>, started_unix_ms: u64, outputs: Vec<String>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            threads,
            started_unix_ms,
            finished_unix_ms: unix_ms(),
            outputs,
        }
    }

    /// Parses and checks a manifest; the command is re-validated.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let m: RunManifest = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if m.tool != TOOL {
            return Err(format!("manifest written by `{}`, not `{TOOL}`", m.tool));
        }
        if m.outputs.iter().any(|o| o.contains('/') || o.contains('\\') || o == "..") {
            return Err("manifest output names must be plain file names".to_string());
        }
        let command = m.command.clone().resolve().map_err(|e| e.to_string())?;
        if command != m.command {
            return Err("manifest parameters are not in resolved form".to_string());
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|m| CliError::format(path, m))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{AuditArgs, Command};

    fn sample() -> RunManifest {
        let cmd = Command::AuditBounds(AuditArgs { hurst: 0.85, s: 0.5, t: 1.0, sweep: vec![64, 128] });
        RunManifest::new(cmd.resolve().unwrap(), Some(2), 1, vec!["bounds.json".into()])
    }

    #[test]
    fn round_trips() {
        let m = sample();
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_foreign_and_invalid() {
        let mut m = sample();
        m.tool = "other".into();
        assert!(RunManifest::from_json(&m.to_json()).is_err());
        let mut m = sample();
        m.outputs = vec!["../x".into()];
        assert!(RunManifest::from_json(&m.to_json()).is_err());
        let text = sample().to_json().replace("0.85", "0.6");
        assert!(RunManifest::from_json(&text).is_err());
        assert!(RunManifest::from_json("{").is_err());
    }
}
