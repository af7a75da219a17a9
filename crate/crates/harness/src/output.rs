//! Files written next to each result.
//!
//! Every CSV `x.csv` gets a sidecar `x.meta.toml` holding the resolved
//! configuration plus run notes (failures, trial scale).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::montecarlo::MonteCarloReport;
use crate::HarnessError;

/// Full-scale trial count per point.
pub const REFERENCE_TRIALS: usize = 1_000_000;

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Sidecar text: `[run]` notes followed by the resolved configuration.
pub fn sidecar(config: &Config, command: &str, reports: &[MonteCarloReport]) -> String {
    let mut out = String::from("# Resolved configuration and run notes.\n[run]\n");
    let _ = writeln!(out, "command = \"{command}\"");
    let _ = writeln!(out, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    if config.experiment.trials < REFERENCE_TRIALS {
        let _ = writeln!(
            out,
            "scale_note = \"{} trials per point (full scale is {REFERENCE_TRIALS}); expect wider confidence bands\"",
            config.experiment.trials
        );
    }
    let failures: usize = reports.iter().map(MonteCarloReport::failure_count).sum();
    let _ = writeln!(out, "failed_trials = {failures}");
    let _ = writeln!(out, "degraded = {}", reports.iter().any(MonteCarloReport::degraded));
    for r in reports {
        for p in &r.points {
            if let Some((trial, msg)) = p.failures.first() {
                let msg = msg.replace('\\', "\\\\").replace('"', "'");
                let _ = writeln!(
                    out,
                    "# {} at {} dBm: {} failures, first at trial {trial}: {msg}",
                    r.method,
                    p.row.ps_dbm,
                    p.failures.len()
                );
            }
        }
    }
    out.push('\n');
    out.push_str(&config.to_toml());
    out
}

/// Writes `csv` to `path` and the sidecar beside it.
pub fn write_with_sidecar(path: &Path, csv: &str, config: &Config, command: &str, reports: &[MonteCarloReport]) -> Result<(), HarnessError> {
    write_file(path, csv)?;
    write_file(&sidecar_path(path), &sidecar(config, command, reports))
}
