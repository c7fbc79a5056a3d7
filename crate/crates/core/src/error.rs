use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid QoS specification: {0}")]
    QosSpec(String),

    #[error("invalid arrival process: {0}")]
    Arrival(String),

    #[error("invalid schedule prior: {0}")]
    Prior(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty system: every arrival rate is zero")]
    EmptySystem,

    #[error("protection level {gamma} outside [0, {len}]")]
    ProtectionLevel { gamma: f64, len: usize },

    #[error("reliability q = {0} must lie in [0, 1)")]
    Reliability(f64),

    #[error("QoS spec unsupportable: the linearized feasible domain is empty")]
    QosUnsupportable,

    #[error("frame {frame}: pair {pair} left the linearized domain (slack {slack})")]
    SlackViolation { frame: u64, pair: usize, slack: f64 },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
