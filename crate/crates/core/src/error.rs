use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    /// Structured input failed validation (shapes, ordering, names).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A computation produced a non-finite or otherwise unusable number.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The normal equations of a fit are singular.
    #[error("rank-deficient normal equations ({0})")]
    RankDeficient(String),

    /// A sweep cell failed; carries the grid coordinates.
    #[error("sweep cell (gamma index {row}, ratio index {col}) failed: {source}")]
    Cell {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }

    /// True for errors caused by bad numbers rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::RankDeficient(_) => true,
            Error::Cell { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
