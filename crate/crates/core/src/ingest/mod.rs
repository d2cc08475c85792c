//! Parsing of raw EEG CSV files, trial logs and run configuration.

mod config;
mod eeg;
mod trials;

use std::path::Path;

pub use config::{load_config, parse_config, LoadedConfig, PipelineConfig};
pub use eeg::{
    read_eeg_csv, read_eeg_from, write_eeg_csv, write_eeg_to, EegReadReport, SignalRecording,
    DEFAULT_CHANNELS,
};
pub use trials::{read_trial_log, read_trial_log_from, write_trial_log, TrialLog, TrialRecord};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("file is empty")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("timestamps not strictly increasing at data row {row}")]
    NonMonotonicTimestamps { row: usize },
    #[error("trials {0} and {1} overlap")]
    OverlappingTrials(usize, usize),
    #[error("trial {0} has end <= start")]
    InvalidTrial(usize),
    #[error("unknown condition label `{0}`")]
    UnknownConditionLabel(String),
    #[error("unknown response label `{0}`")]
    UnknownResponseLabel(String),
    #[error("invalid value for `{key}`: must be {constraint}")]
    InvalidValue { key: String, constraint: String },
    #[error("malformed recording: {0}")]
    Shape(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
