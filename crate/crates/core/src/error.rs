//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]; variants carry enough context
//! to point at the offending argument or state (grid sizes, CFL numbers,
//! config field paths) so callers can surface actionable messages.

/// Errors produced by the solver, diagnostics, and IO layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Grid construction rejected (size not a power of two, too small, ...).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two objects that must share a grid (or particle count) do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A stability limit was exceeded; the step is rejected, state unchanged.
    #[error("CFL violation: {0}")]
    Cfl(String),

    /// A non-finite value surfaced where finite data is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Run configuration failed validation; the message names the field.
    #[error("config validation: {0}")]
    Config(String),

    /// A file has the wrong schema/version (CSV header, checkpoint magic...).
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// Underlying IO failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
