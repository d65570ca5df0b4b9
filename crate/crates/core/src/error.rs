use thiserror::Error;

/// Errors raised anywhere in the game pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid control set `{label}`: {reason}")]
    InvalidControlSet { label: String, reason: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite coefficient at t={t}, x={x:?}, u={u:?}, v={v:?}")]
    NonFiniteCoefficient {
        t: f64,
        x: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("strategy undefined at t={t}: start rule resolves at {start}")]
    OutOfDomain { t: f64, start: f64 },

    #[error("strategy invariant violated: {0}")]
    StrategyInvariant(String),

    #[error("stopping rule `{rule}` changed its committed time from {committed} to {now}")]
    RuleCommitment {
        rule: String,
        committed: f64,
        now: f64,
    },

    #[error("strategy mismatch: {0}")]
    StrategyMismatch(String),

    #[error("state explosion at step {step} (t={t}): |X|={norm:e} exceeds guard {guard:e}")]
    Explosion {
        step: usize,
        t: f64,
        norm: f64,
        guard: f64,
    },

    #[error("CFL violation: dt={dt:e} exceeds monotone bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("cross-diffusion not diagonally dominant at node {node}, t={t}: {detail}; rotate or refine the grid")]
    NotDiagonallyDominant { node: usize, t: f64, detail: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("certification spec error: {0}")]
    Spec(String),

    #[error("candidate error: {0}")]
    Candidate(String),

    #[error("construction refused at {at}: {reason}")]
    Refused { at: String, reason: String },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, GameError>;
