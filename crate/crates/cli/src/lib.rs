//! Command-line front end: WAV and config I/O plus the `analyze`,
//! `synthesize`, `frame-check` and `paths` workflows.

use std::fmt;

pub mod config;
pub mod run;
pub mod wav;

pub use config::RunConfig;
pub use run::{run, Cli, Command};

/// A failure tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &'static str, message: impl Into<String>) -> StageError {
        StageError { stage, message: message.into() }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: Vec<&str> = self.message.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        write!(f, "error[{}]: {}", self.stage, msg.join("; "))
    }
}

impl std::error::Error for StageError {}
