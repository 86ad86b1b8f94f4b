//! Scenario execution: the coupled plant/controller loop over the tag bus,
//! trace and run-record output, real-time serving and historian replay.

pub mod config;
mod live;
mod runner;

pub use config::{Action, Assertion, CompareOp, Config, ConfigValue, Event, InjectFault, Poke, Scenario, DEFAULT_START_EPOCH_MS};
pub use live::{replay, serve, ServeOptions};
pub use runner::{
    config_hash, run, AssertFailure, FaultRecord, RunRecord, RunSummary, Simulation, TransitionRecord, TripRecord,
    RUN_DIR_ENV,
};

use crate::control::ControlError;
use crate::plant::PlantError;
use crate::tagbus::{HistorianError, TagError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Historian(#[from] HistorianError),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl SimError {
    /// Configuration problems, as opposed to runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Parse(_) | SimError::Config(_))
    }
}
