use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    /// AUROC needs at least one positive and one negative.
    #[error("undefined AUROC: {n_pos} positives, {n_neg} negatives")]
    UndefinedAuroc { n_pos: usize, n_neg: usize },

    #[error("AUPRC undefined: no positive labels")]
    NoPositives,

    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient class balance: {degenerate} of {total} bootstrap resamples were single-class")]
    InsufficientClassBalance { degenerate: usize, total: usize },

    #[error("bootstrap needs B >= 100, got {0}")]
    TooFewResamples(usize),

    #[error("contingency table has a zero-margin {0}")]
    ZeroMargin(&'static str),

    #[error("contingency table must be 2 x k with k >= 2, got {rows} x {cols}")]
    BadTableShape { rows: usize, cols: usize },

    #[error("model comparison requires identical evaluation sets: {left} vs {right}")]
    MismatchedEvalSets { left: String, right: String },
}
