use thiserror::Error;

/// Errors raised by ingestion, cohort assembly, phenotyping and feature construction.
///
/// Per-row data problems are *not* errors: they become entries in the rejects
/// report. Only structural problems (missing tables, bad headers, bad
/// configuration) are fatal.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("missing table {0}")]
    MissingTable(&'static str),

    #[error("table {table}: {message}")]
    MalformedTable { table: &'static str, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("empty cohort")]
    EmptyCohort,

    #[error("train_fraction must be in (0, 1), got {0}")]
    BadFraction(f64),

    #[error("encoder fitting fold has no rows")]
    EmptyFold,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}
