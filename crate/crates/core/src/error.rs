use thiserror::Error;

/// Errors raised by the formation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    /// A vector that must be normalized is (numerically) zero. Usually two agents are collocated.
    #[error("degenerate vector (norm {norm:e}){}", edge_suffix(*.edge))]
    DegenerateVector { norm: f64, edge: Option<usize> },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid bearing: {0}")]
    InvalidBearing(String),

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("relative positions for follower {agent} do not match its neighbor set: {detail}")]
    UnknownNeighbor { agent: usize, detail: String },

    #[error("formation is not localizable (min eigenvalue of L_ff = {min_eigenvalue:e})")]
    NotLocalizable { min_eigenvalue: f64 },

    #[error(
        "target formation is not infinitesimally bearing rigid (rank {rank}, required {required})"
    )]
    NotRigid { rank: usize, required: usize },

    #[error("follower solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveResidual { residual: f64, tolerance: f64 },

    #[error("invalid maneuver command: {0}")]
    InvalidCommand(String),

    #[error("schedule does not cover [{from}, {to})")]
    ScheduleGap { from: f64, to: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("eigenvalue iteration did not converge for a {size}x{size} matrix")]
    EigenSolveFailure { size: usize },

    #[error("fit window too short: {len} samples, need at least {min}")]
    WindowTooShort { len: usize, min: usize },

    #[error("non-positive sample {value:e} at index {index} in fit window")]
    NonPositiveSample { index: usize, value: f64 },
}

fn edge_suffix(edge: Option<usize>) -> String {
    match edge {
        Some(k) => format!(" on edge {k}"),
        None => String::new(),
    }
}

pub type Result<T, E = FormationError> = std::result::Result<T, E>;
