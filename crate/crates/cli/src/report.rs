use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Summary of one subcommand run. Contains no timings, so equal inputs give
/// byte-identical JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig, results: serde_json::Value, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Report { command: command.into(), version: VERSION, seed: config.seed, config: config.clone(), results, checks, passed }
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Where CSV artifacts go; a no-op sink when no output directory is configured.
pub struct Artifacts {
    dir: Option<PathBuf>,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(config: &RunConfig) -> Self {
        Artifacts { dir: config.out.as_ref().map(PathBuf::from), written: Vec::new() }
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    pub fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> bifsim_core::Result<()>,
    ) -> Result<(), CliError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }
}
