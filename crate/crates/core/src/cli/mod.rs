//! Run configuration, persistence, and the command implementations behind
//! the `segpace` binary.
//!
//! Every artifact a command writes (checkpoint, metrics file, results file,
//! plot) embeds the hash of the resolved configuration that produced it, and
//! metrics/checkpoints embed the full configuration verbatim.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod metrics;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{0} does not match: {1}")]
    ConfigMismatch(&'static str, String),
    #[error("metrics schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("toml error: {0}")]
    Toml(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Distill(#[from] crate::distill::DistillError),
    #[error(transparent)]
    Pretext(#[from] crate::pretext::PretextError),
    #[error(transparent)]
    Eval(#[from] crate::evalharness::EvalError),
}
