//! Error classification for the CLI: every failure maps to one exit code.

use std::fmt;

use prefbench_core::data::DataError;
use prefbench_core::engine::EngineError;
use prefbench_core::eval::EvalError;
use prefbench_core::models::ModelError;
use prefbench_core::synthgen::SynthError;

/// Process exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CmdError::Usage(_) => ExitCode::Usage,
            CmdError::Data(_) => ExitCode::Data,
            CmdError::Numeric(_) => ExitCode::Numeric,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CmdError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CmdError::Data(msg.into())
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "usage error: {m}"),
            CmdError::Data(m) => write!(f, "data error: {m}"),
            CmdError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<DataError> for CmdError {
    fn from(e: DataError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<SynthError> for CmdError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::BadConfig(_) | SynthError::NotPowerOfTwo { .. } => {
                CmdError::Usage(e.to_string())
            }
            other => CmdError::Data(other.to_string()),
        }
    }
}

impl From<EngineError> for CmdError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NonFiniteLoss { .. } => CmdError::Numeric(e.to_string()),
            EngineError::BadConfig(_) => CmdError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CmdError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Engine(inner) => inner.into(),
            ModelError::BadHyper(_) => CmdError::Usage(e.to_string()),
            other => CmdError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CmdError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(inner) => inner.into(),
            EvalError::BudgetsNotIncreasing => CmdError::Usage(e.to_string()),
            other => CmdError::Data(other.to_string()),
        }
    }
}
