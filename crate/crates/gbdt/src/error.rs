use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("single-class labels: cannot train ({n_pos} positive / {n_neg} negative)")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("zero usable features")]
    NoFeatures,
    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("column mismatch: model expects {expected} features, matrix has {got}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("feature names differ between model and matrix at index {0}")]
    FeatureNameMismatch(usize),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error(
        "stratified {k}-fold split impossible: {n_pos} positives / {n_neg} negatives \
         (need at least {k} of each)"
    )]
    UnstratifiableFold { k: usize, n_pos: usize, n_neg: usize },
    #[error("train-time covers required")]
    MissingCovers,
    #[error("empty matrix: {0}")]
    EmptyInput(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("model serialization failed: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Eval(#[from] periop_eval::EvalError),
}
