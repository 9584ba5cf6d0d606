use crate::planner::PlanTree;

/// Errors produced by the planning toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    /// A field failed validation; `field` uses the dotted scenario path (e.g. `goal.radius`).
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("insufficient speed diversity: need at least 2 distinct speeds, got {0}")]
    InsufficientSpeedDiversity(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient speeds for mode {mode}: need at least 3 distinct speeds, got {found}")]
    InsufficientSpeeds { mode: String, found: usize },

    #[error("ramp too long: needs {needed:.3} m but the segment is {available:.3} m")]
    RampTooLong { needed: f64, available: f64 },

    #[error("degenerate range: measurement point coincides with the state")]
    DegenerateRange,

    #[error("duplicate consecutive control points at index {0}")]
    DuplicatePoints(usize),

    #[error("coincident points")]
    CoincidentPoints,

    #[error("continuity violation: {0}")]
    Continuity(String),

    #[error("goal unreachable after {iterations} iterations")]
    GoalUnreachable {
        iterations: usize,
        tree: Box<PlanTree>,
    },

    #[error("schema error at line {line}: {msg}")]
    Schema { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than planning failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::GoalUnreachable { .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Schema {
            line,
            msg: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
