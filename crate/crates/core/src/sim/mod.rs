//! Scenario files, the closed-loop runner, logs, plots and the reference experiment grid.

pub mod certify;
pub mod grid;
pub mod log;
pub mod plot;
pub mod runner;
pub mod scenario;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::fblin::ControlError;
use crate::resilience::ResilienceError;
use crate::vehicle::IntegrationError;

pub use grid::{run_experiment_grid, GridOptions, GridReport};
pub use log::{LogRow, RunLog};
pub use runner::{run_scenario, RunFailure, RunOutcome, RunResult};
pub use scenario::{Scenario, ScenarioFile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("step {step} (t = {t}): {source}")]
    Control { step: usize, t: f64, source: ControlError },
    #[error("step {step} (t = {t}): {source}")]
    Integration { step: usize, t: f64, source: IntegrationError },
    #[error("step {step} (t = {t}): {source}")]
    Resilience { step: usize, t: f64, source: ResilienceError },
    #[error("log: {0}")]
    Log(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl SimError {
    /// 0 success, 2 configuration, 3 singularity or divergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Control { source: ControlError::Singularity { .. } | ControlError::SingularM(_), .. } => 3,
            SimError::Integration { source: IntegrationError::Divergence { .. }, .. } => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
