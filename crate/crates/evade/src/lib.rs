//! Experiment harness for `evade-core`: configuration files, metrics output,
//! checkpoint and replay persistence, text formats and the command-line tool.

use std::path::PathBuf;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod metrics;
pub mod replay_io;

pub use config::{ExperimentConfig, Overrides};
pub use experiment::{run_experiment, ExperimentOutput, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error(transparent)]
    Core(evade_core::Error),
}

impl From<evade_core::Error> for HarnessError {
    fn from(e: evade_core::Error) -> Self {
        match e {
            evade_core::Error::Config(m) => HarnessError::Config(m),
            other => HarnessError::Core(other),
        }
    }
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        HarnessError::Format {
            what,
            message: message.into(),
        }
    }
}
