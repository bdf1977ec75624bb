use impact_game_core::GameError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Schema or consistency violation in the config or command line.
    #[error("usage error at `{path}`: {message}")]
    Usage { path: String, message: String },
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: GameError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

/// Machine-readable form printed to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(path: impl Into<String>, message: impl Into<String>) -> Self {
        let path = path.into();
        Self::Usage { path: if path.is_empty() { ".".into() } else { path }, message: message.into() }
    }

    pub fn numeric(context: impl Into<String>, source: GameError) -> Self {
        Self::Numeric { context: context.into(), source }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage { .. } => 2,
            Self::Numeric { .. } => 3,
            Self::Io { .. } | Self::Output(_) => 4,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (kind, path, message) = match self {
            Self::Usage { path, message } => ("usage", Some(path.clone()), message.clone()),
            Self::Numeric { source, .. } => (numeric_kind(source), None, self.to_string()),
            Self::Io { path, source } => ("io", Some(path.clone()), source.to_string()),
            Self::Output(m) => ("output", None, m.clone()),
        };
        ErrorReport { kind, path, message, exit_code: self.exit_code() }
    }
}

fn numeric_kind(e: &GameError) -> &'static str {
    match e {
        GameError::InvalidArgument(_) => "invalid_argument",
        GameError::Validation(_) => "validation",
        GameError::Numeric(_) => "numeric",
        GameError::IllConditioned { .. } => "ill_conditioned",
        GameError::Domain(_) => "domain",
        GameError::NoUniqueEquilibrium(_) => "no_unique_equilibrium",
        GameError::Bracket(_) => "bracket",
    }
}
