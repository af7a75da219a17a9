//! Monte-Carlo experiment harness for the full-duplex energy-harvesting link.
//!
//! [`config`] resolves a scenario from TOML plus flags, [`montecarlo`] runs
//! paired trials and reduces them, [`output`] writes the CSV files and their
//! provenance sidecars.

pub mod config;
pub mod montecarlo;
pub mod output;

pub use config::{Config, Method};
pub use montecarlo::{
    compare_methods, gains_csv, mean_std, paired_gains, pairwise_sum, results_csv, run_monte_carlo, trial_channel, trial_seed,
    Comparison, GainRow, MonteCarloReport, Pipeline, PointOutcome, ResultRow, RunOptions, Scenario, TrialResult, GAINS_HEADER,
    RESULTS_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => exit::CONFIG,
            HarnessError::Numerical(_) => exit::NUMERICAL,
        }
    }
}

/// Process exit codes of the `fdeh` binary.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    /// Finished, but some row lost more than 1% of its trials.
    pub const DEGRADED: u8 = 4;
}
