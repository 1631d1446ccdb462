use std::fmt;
use std::path::Path;

use ambqc::bounds::BoundError;
use ambqc::dump::DumpError;
use ambqc::engine::EngineError;
use ambqc::experiments::ExperimentError;
use ambqc::instance::InstanceError;
use ambqc::randstates::RandStateError;
use ambqc::statevector::StateError;

/// Process exit status for each failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Validation = 2,
    Model = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Validation,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            kind: ExitKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        Self::validation(format!("invalid instance at {e}"))
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let kind = match e {
            EngineError::StateSize { .. }
            | EngineError::DenseLimit { .. }
            | EngineError::NotDecision
            | EngineError::NoTrials
            | EngineError::ProductSize { .. }
            | EngineError::LengthMismatch(..) => ExitKind::Validation,
            _ => ExitKind::Model,
        };
        let message = match &e {
            EngineError::IncompleteModel { qubit, witness } => {
                let steps: Vec<String> = witness
                    .iter()
                    .map(|s| format!("qubit {} povm {} -> {}", s.qubit, s.povm, s.outcome))
                    .collect();
                format!(
                    "incomplete model: qubit {qubit} is requested again after the history [{}]",
                    steps.join(", ")
                )
            }
            other => other.to_string(),
        };
        Self { kind, message }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<RandStateError> for CliError {
    fn from(e: RandStateError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Engine(inner) => inner.into(),
            ExperimentError::Io { .. } => Self {
                kind: ExitKind::Io,
                message: e.to_string(),
            },
            ExperimentError::Pool(_) => Self {
                kind: ExitKind::Model,
                message: e.to_string(),
            },
            other => Self::validation(other.to_string()),
        }
    }
}

/// Dump errors while reading `path`: I/O problems map to exit 4, bad content to exit 2.
pub fn dump_error(path: &Path, e: DumpError) -> CliError {
    match e {
        DumpError::Io(io) => CliError::io(path, io),
        other => CliError::validation(format!("{}: {other}", path.display())),
    }
}
