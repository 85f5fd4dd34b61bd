use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("column `{0}` is required by the schema but missing from the CSV header")]
    MissingColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("marginal over {columns:?} needs {cells} cells, above the cap of {cap}")]
    Capacity {
        columns: Vec<String>,
        cells: u128,
        cap: usize,
    },

    #[error("unsupported query on column `{column}`: {reason}")]
    UnsupportedQuery { column: String, reason: String },

    #[error("privacy budget refused: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: f64, remaining: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("datasets are not neighbors: {0}")]
    NotNeighbors(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
