use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code convention: `Input` → 2,
/// `Capacity` → 3, `Solver` → 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: parse failures, invariant violations, bad indices.
    #[error("input error: {0}")]
    Input(String),

    /// A requested horizon would blow past the configured safety cap.
    #[error("capacity error: horizon {requested} exceeds cap {cap} (override the cap to proceed)")]
    Capacity { requested: usize, cap: usize },

    /// The LP solver could not produce a usable answer (iteration limit,
    /// numerical breakdown, or an unexpected infeasible/unbounded status).
    #[error("solver error: {0}")]
    Solver(String),

    /// A stateful agent was driven out of protocol (observe before act,
    /// stepping past the final stage, ...).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Anti-discounted regrets grew past the overflow guard.
    #[error("regret divergence: |{value:.3e}| exceeds guard {guard:.1e}")]
    Divergence { value: f64, guard: f64 },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
