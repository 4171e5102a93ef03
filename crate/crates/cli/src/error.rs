use std::fmt;

use drpu_core::Error;

pub const EXIT_FAILED_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_DEGENERATE_PRIOR: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.code {
            EXIT_FAILED_CHECK => "check failed",
            EXIT_CONFIG => "config error",
            EXIT_DATA => "data error",
            EXIT_DIVERGENCE => "numeric divergence",
            EXIT_DEGENERATE_PRIOR => "degenerate prior estimation",
            _ => "error",
        };
        if self.message.starts_with(kind) {
            f.write_str(&self.message)
        } else {
            write!(f, "{kind}: {}", self.message)
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument { .. } | Error::NotStronglyConvex(_) => EXIT_CONFIG,
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            Error::DegeneratePrior { .. } | Error::DegenerateEstimate(_) => EXIT_DEGENERATE_PRIOR,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Prefixes the field of an invalid-argument error with `prefix.`.
pub fn nested(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument { field, reason } => Error::InvalidArgument {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}
