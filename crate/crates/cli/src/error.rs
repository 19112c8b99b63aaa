use std::fmt;

use tempsal::analysis::AnalysisError;
use tempsal::checkpoint::CheckpointError;
use tempsal::gaze::{FormatError, GazeError};
use tempsal::metrics::MetricError;
use tempsal::model::ModelError;
use tempsal::synth::SynthError;
use tempsal::tensor::TensorError;

/// Failure of a subcommand; the kind selects the exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Input(m) | CliError::Numeric(m)) = self;
        f.write_str(&m.replace(['\n', '\r'], " "))
    }
}

fn numeric(e: impl fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn input(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<GazeError> for CliError {
    fn from(e: GazeError) -> Self {
        match e {
            GazeError::DegenerateMap(_) => numeric(e),
            _ => input(e),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Map(g) => g.into(),
            _ => input(e),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Degenerate(_) => numeric(e),
            _ => input(e),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite(_) => numeric(e),
            _ => input(e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NoUsableImages(_) | AnalysisError::ZeroVariance => numeric(e),
            AnalysisError::Map(g) => g.into(),
            AnalysisError::Metric(m) => m.into(),
            AnalysisError::Input(_) => input(e),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Tensor(t) => t.into(),
            _ => input(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Degenerate(_) => numeric(e),
            ModelError::Tensor(t) => t.into(),
            ModelError::Metric(m) => m.into(),
            ModelError::Checkpoint(c) => c.into(),
            _ => input(e),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Map(g) => g.into(),
            _ => input(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        input(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        input(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        input(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
