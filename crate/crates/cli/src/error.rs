use std::fmt;

use hpmf_core::baseline::MeanError;
use hpmf_core::evaluation::EvalError;
use hpmf_core::io::IoError;
use hpmf_core::{DataError, FactorError, TaxonomyError};

/// A failed command, grouped by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable or malformed input (exit 2).
    Data(String),
    /// Training diverged (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        match e {
            FactorError::NonFiniteUpdate { .. } => CliError::Numeric(e.to_string()),
            FactorError::BadHyperparams(_) | FactorError::BadRate(_) | FactorError::BadSigma(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match &e {
            IoError::Factor {
                source: FactorError::NonFiniteUpdate { .. },
                ..
            } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Factor(f) => f.into(),
            EvalError::BadConfig(_) | EvalError::SameColumn(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MeanError> for CliError {
    fn from(e: MeanError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TaxonomyError> for CliError {
    fn from(e: TaxonomyError) -> Self {
        CliError::Data(e.to_string())
    }
}
