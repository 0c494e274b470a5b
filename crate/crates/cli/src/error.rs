use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag values.
    #[error("{0}")]
    Usage(String),
    /// The config file is unreadable, malformed or inconsistent.
    #[error("{0}")]
    Config(String),
    /// The analysis itself failed, including failed checks.
    #[error("{0}")]
    Analysis(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn analysis(e: impl std::fmt::Display) -> Self {
        CliError::Analysis(e.to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Analysis(_) => "analysis",
            CliError::Io(_) => "io",
        }
    }

    /// 2 for anything the caller can fix in flags or config, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Analysis(_) | CliError::Io(_) => 1,
        }
    }

    /// One line of JSON for stderr.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
