//! Crate-wide error type and the CLI exit-code taxonomy.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("P and Q share a root (scaled resultant {resultant:.3e} below {tolerance:.1e})")]
    Coprimality { resultant: f64, tolerance: f64 },

    #[error("both homogeneous components vanish at the evaluation point")]
    DegenerateValue,

    #[error("root solver did not reach residual {tolerance:.1e} (worst {residual:.3e})")]
    RootConvergence { residual: f64, tolerance: f64 },

    #[error("base point is exceptional (finite backward orbit)")]
    ExceptionalPoint,

    #[error("budget exceeded: {what} needs {needed} > {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u64,
        budget: u64,
        /// Best gap certificate reached before giving up, when meaningful.
        best_gap: Option<f64>,
    },

    #[error("no sampled center admits a valid inverse-branch ball")]
    NoValidBall,

    #[error("no repelling periodic point found up to period {max_period}")]
    NoRepellingPointFound { max_period: usize },

    #[error("empty set has no Hausdorff distance")]
    EmptySet,

    #[error("gap-domain geometry underflows the working resolution: {0}")]
    GeometryUnderflow(String),

    #[error("walk exceeded {cap} steps after {completed} finished samples")]
    WalkBudgetExceeded { cap: u64, completed: u64 },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 1 = input, 2 = budget, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Coprimality { .. }
            | Error::GeometryUnderflow(_)
            | Error::EmptySet => 1,
            Error::BudgetExceeded { .. } | Error::WalkBudgetExceeded { .. } => 2,
            Error::DegenerateValue
            | Error::RootConvergence { .. }
            | Error::ExceptionalPoint
            | Error::NoValidBall
            | Error::NoRepellingPointFound { .. }
            | Error::DegenerateFit(_) => 3,
        }
    }
}
