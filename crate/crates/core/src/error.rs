use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by the kind of failure so that front ends can map
/// them onto exit codes: everything except [`Error::Numeric`] is an input or
/// validation problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("order error at row {row}: timestamps must be strictly increasing")]
    Order { row: usize },
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("template error: {0}")]
    Template(String),
}

impl Error {
    /// True for failures caused by non-finite numbers during computation.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
