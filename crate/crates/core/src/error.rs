use thiserror::Error;

/// Errors surfaced by the ranking pipeline and its surrounding machinery.
#[derive(Debug, Error)]
pub enum RankError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight vector off the simplex: {0}")]
    OffSimplex(String),

    #[error("ranking matrix is not separable: rankings {0:?} own no novel pair")]
    NotSeparable(Vec<usize>),

    #[error("correlation matrix of the prior is rank deficient")]
    RankDeficientPrior,

    #[error("pair ({i},{j}) is never preferred under the prior mean (row {row} of B*a is zero)")]
    ZeroProbabilityPair { i: usize, j: usize, row: usize },

    #[error("insufficient distinct extreme clusters: found {found} of {needed}")]
    InsufficientClusters {
        found: usize,
        needed: usize,
        partial: Vec<usize>,
    },

    #[error("column {k} of the estimate has zero sum (novel pair never observed)")]
    EmptyColumn { k: usize },

    #[error("negative entry at row {row}, column {k}")]
    NegativeEntry { row: usize, k: usize },

    #[error("insufficient history: every candidate star has an empty comparison set")]
    InsufficientHistory,

    #[error("pair-row dimension {w} exceeds the configured cap {cap}")]
    DimensionCap { w: usize, cap: usize },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RankError {
    pub fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        RankError::Malformed {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, RankError>;
