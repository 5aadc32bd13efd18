use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing required column `{column}`")]
    Schema { column: String },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("singular fit: {context}{}", fmt_dependent(.dependent))]
    Singular {
        context: String,
        dependent: Vec<String>,
    },

    #[error("rank error: {0}")]
    Rank(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("need at least {needed} localities, got {got}")]
    InsufficientLocalities { needed: usize, got: usize },

    #[error("alignment error: {context}: {}", .ids.join(", "))]
    Alignment { context: String, ids: Vec<String> },

    #[error("missing baseline cells at ages {ages:?}")]
    MissingBaseline { ages: Vec<i32> },

    #[error("first stage for `{locality}` is exactly zero; ratio undefined")]
    ZeroFirstStage { locality: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown locality `{0}`")]
    UnknownLocality(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_dependent(cols: &[String]) -> String {
    if cols.is_empty() {
        String::new()
    } else {
        format!(" (dependent columns: {})", cols.join(", "))
    }
}

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::Schema { .. }
            | Error::Row { .. }
            | Error::InsufficientSupport(_)
            | Error::InsufficientLocalities { .. }
            | Error::Alignment { .. }
            | Error::MissingBaseline { .. }
            | Error::UnknownLocality(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Singular { .. }
            | Error::Rank(_)
            | Error::DegenerateDenominator(_)
            | Error::ZeroFirstStage { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
            dependent: Vec::new(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
