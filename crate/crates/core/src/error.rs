use crate::space::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("map is not injective")]
    NotInjective,
    #[error("map is not surjective")]
    NotSurjective,
    #[error("sum exponent {0} is outside [1, inf]")]
    InvalidP(f64),
    #[error("invalid space: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSpace(Vec<Diagnostic>),
    #[error("unit ball has no vertex description within the size cap")]
    PolytopeUnavailable,
    #[error("norm is not polyhedral; exact evaluation unavailable")]
    NotPolyhedral,
    #[error("optimizer budget exhausted (best value {best})")]
    BudgetExhausted { best: f64 },
    #[error("quotients are not isometric: {0}")]
    NoIsometryBetweenQuotients(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical solver failed: {0}")]
    Solver(String),
    #[error("parse error{}: {field}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<crate::program::ProgramError> for Error {
    fn from(e: crate::program::ProgramError) -> Self {
        Error::Solver(e.to_string())
    }
}
