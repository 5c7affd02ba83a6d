use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Solver(#[from] stackcap_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        use stackcap_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) | CliError::Output(_) => "io",
            CliError::Solver(e) => match e {
                E::Parameter(_) => "parameter",
                E::Range(_) => "range",
                E::Numeric(_) => "numeric",
                E::StepCollapse { .. } => "step-collapse",
                E::Stability { .. } => "stability",
                E::Precondition(_) => "precondition",
                E::Fit(_) => "fit",
            },
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
