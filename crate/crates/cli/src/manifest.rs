use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_atomic, VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

/// Record of one invocation, written whether or not it succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub configs: Vec<ExperimentConfig>,
    pub config_sha256: Vec<String>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<ErrorInfo>,
    pub convergence: BTreeMap<String, bool>,
    pub substitutions: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            version: VERSION.into(),
            configs: Vec::new(),
            config_sha256: Vec::new(),
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            status: "ok".into(),
            exit_code: 0,
            error: None,
            convergence: BTreeMap::new(),
            substitutions: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn fail(&mut self, e: &CliError) {
        self.status = "failed".into();
        self.exit_code = e.exit_code();
        self.error = Some(ErrorInfo {
            code: e.code().into(),
            message: e.to_string(),
        });
    }

    pub fn succeeded(&self) -> bool {
        self.exit_code == 0
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }
}
