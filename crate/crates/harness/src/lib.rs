//! Scenario execution, metrics, CSV export and the command-line interface
//! around `observerkit-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

pub mod checks;
pub mod cli;
pub mod config;
pub mod export;
pub mod metrics;
pub mod scenario;

pub use config::{PlantId, ScenarioConfig};
pub use metrics::{MetricsReport, ObserverMetrics, StateMetrics};
pub use scenario::{build_scenario, run_scenario, ObserverRun, Scenario, ScenarioResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<observerkit_core::Error> for HarnessError {
    fn from(e: observerkit_core::Error) -> Self {
        if e.is_numerical() {
            HarnessError::Numerical(e.to_string())
        } else {
            HarnessError::Validation(e.to_string())
        }
    }
}
