use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv: row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv: {0}")]
    CsvFormat(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate grid for feature {feature}: {reason}")]
    DegenerateGrid { feature: String, reason: String },

    #[error("correlation matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular design matrix: term {term} is (numerically) collinear with earlier terms")]
    SingularDesign { term: usize },

    #[error("prediction failed at row {row}: {message}")]
    Prediction { row: usize, message: String },

    #[error("prediction failed at observation {obs}, grid point {grid_point}: {source}")]
    IcePrediction {
        obs: usize,
        grid_point: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("external predictor timed out after {0:.1}s")]
    Timeout(f64),

    #[error("external predictor returned {got} predictions for {expected} rows")]
    CountMismatch { expected: usize, got: usize },

    #[error("external predictor: {0}")]
    Protocol(String),

    #[error("empty observation set")]
    EmptySupport,

    #[error("interaction index undefined: {0}")]
    UndefinedIndex(String),

    #[error("unknown setting '{name}' (available: {available})")]
    UnknownSetting { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse category used by the command line for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Timeout(_) | Error::CountMismatch { .. } | Error::Protocol(_) => {
                ErrorKind::Protocol
            }
            Error::IcePrediction { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Protocol,
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::CsvFormat(e.to_string())
    }
}
