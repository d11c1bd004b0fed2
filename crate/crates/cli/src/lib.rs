//! Planning, broadcast export, fleet simulation and model validation driven
//! by a TOML scenario file. The `tclctl` binary is a thin wrapper.

pub mod broadcast;
pub mod config;
pub mod io;
pub mod scenario;

pub use config::{Resolved, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver stopped at its iteration cap: {0}")]
    SolverCap(String),
    #[error("QoS violation: {0}")]
    Qos(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::SolverCap(_) => 3,
            CliError::Qos(_) => 4,
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<tcl_core::Error> for CliError {
    fn from(e: tcl_core::Error) -> Self {
        match e {
            tcl_core::Error::MaxIterations { .. } => CliError::SolverCap(e.to_string()),
            e => CliError::Failed(e.to_string()),
        }
    }
}
