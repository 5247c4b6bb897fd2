//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// A pivot fell below the singularity threshold during LU elimination.
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e} at column {col}")]
    SingularMatrix { pivot: f64, threshold: f64, col: usize },

    /// A matrix expected to be symmetric was not, within tolerance.
    #[error("matrix not symmetric: |a[{row},{col}] - a[{col},{row}]| = {deviation:.3e}")]
    NotSymmetric { row: usize, col: usize, deviation: f64 },

    /// A transition-matrix row does not sum to one (or has negative entries).
    #[error("not row-stochastic: row {row} ({reason})")]
    NotStochastic { row: usize, reason: String },

    /// The chain has states that are not mutually reachable.
    #[error("reducible chain: state {from} cannot reach state {to}")]
    Reducible { from: usize, to: usize },

    /// No power of the transition matrix is entrywise positive.
    #[error("periodic chain: no strictly positive power up to exponent {checked}")]
    Periodic { checked: usize },

    /// Worst-case TV distance did not reach the target within the step cap.
    #[error("chain did not mix to epsilon={epsilon:.3e} within {max_steps} steps")]
    DidNotMix { epsilon: f64, max_steps: usize },

    /// Two distributions (or vectors) of different lengths were combined.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A chain state index was outside `0..num_states`.
    #[error("state {state} out of range for chain with {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },

    /// Vector/matrix dimensions incompatible with the operation.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A parameter violated its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The averaged operator is not strongly monotone (mu_hat <= 0).
    #[error("not strongly monotone: mu_hat = {mu_hat:.6e} <= 0")]
    NotStronglyMonotone { mu_hat: f64 },

    /// The local-SA iteration matrix has spectral radius >= 1.
    #[error("iteration matrix not Schur-stable: spectral radius {radius:.12}")]
    NotSchurStable { radius: f64 },

    /// The agent's observation space cannot be enumerated exactly.
    #[error("observation space not enumerable for family {family}")]
    NotEnumerable { family: String },

    /// The global iterate norm exceeded the divergence guard.
    #[error("diverged at round {round}: |theta_bar| = {norm:.3e} (step size too large?)")]
    Diverged { round: usize, norm: f64 },

    /// An aggregation received no data.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Analysis input failed its precondition (e.g. too few sweep points).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Experiment-spec or instance-file parse failure.
    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch { context: context.into() }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
