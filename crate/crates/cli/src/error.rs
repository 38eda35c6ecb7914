use std::path::PathBuf;
use std::process::ExitCode;

/// Failure of one command, mapped onto a documented exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Infeasible(varsynth::Error),
    #[error(transparent)]
    Evaluation(varsynth::Error),
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Validation {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io { .. } => exit::IO,
            CliError::Parse { .. } => exit::PARSE,
            CliError::Validation { .. } => exit::VALIDATION,
            CliError::Infeasible(_) => exit::NOT_CONVERGED,
            CliError::Evaluation(_) => exit::EVALUATION,
        })
    }
}

impl From<varsynth::Error> for CliError {
    fn from(e: varsynth::Error) -> Self {
        match e {
            varsynth::Error::Infeasible(_) => CliError::Infeasible(e),
            e => CliError::Evaluation(e),
        }
    }
}

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// Study or output file could not be read or written.
    pub const IO: u8 = 1;
    /// Bad command-line usage (reported by the argument parser).
    pub const USAGE: u8 = 2;
    /// Study file is not well-formed JSON or does not match the schema.
    pub const PARSE: u8 = 3;
    /// Study file parsed but describes an invalid study.
    pub const VALIDATION: u8 = 4;
    /// The optimizer stopped short of its tolerances or the problem is
    /// infeasible. Best-found results are still written.
    pub const NOT_CONVERGED: u8 = 5;
    /// The transfer function or a link model failed to evaluate.
    pub const EVALUATION: u8 = 6;
    /// Monte-Carlo and delta-method variances disagree beyond the threshold.
    pub const CHECK_FAILED: u8 = 7;
}
