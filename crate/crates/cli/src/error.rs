use thiserror::Error;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for bad arguments, configuration or input files.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for failures while running a valid job.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Prefixes the message with `context`, keeping the kind.
    pub fn context(self, context: &str) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{context}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{context}: {m}")),
        }
    }
}

impl From<cgx::Error> for CliError {
    fn from(e: cgx::Error) -> Self {
        use cgx::Error as E;
        match e {
            E::Parameter(_)
            | E::Schema(_)
            | E::Ingestion { .. }
            | E::UnsupportedTask(_)
            | E::Shape { .. }
            | E::FeatureOutOfRange { .. }
            | E::InvalidRule(_)
            | E::Parse { .. }
            | E::ModelFormat(_)
            | E::Json(_) => CliError::Validation(e.to_string()),
            E::Diverged { .. } | E::IterationLimit(_) | E::Unbounded | E::Substitution(_) | E::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
