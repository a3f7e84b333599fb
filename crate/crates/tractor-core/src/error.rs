//! Shared error type for the engine.
//!
//! Every fallible operation funnels into [`Error`]. Budget and usage errors
//! are kept distinct from numerical failures so callers (in particular the
//! CLI) can map them to different exit codes.

/// Engine-wide error enum.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two jets or fields disagree on chart dimension.
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// Two jets or fields disagree on truncation order.
    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    /// A caller-supplied argument is structurally invalid.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Reciprocal of a jet whose constant term vanishes.
    #[error("singular division: reciprocal of a jet with zero constant term")]
    SingularDivision,

    /// Analytic composition evaluated outside its domain.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// An operation needs more derivative orders than the inputs carry.
    /// Nothing is ever silently truncated; the caller must supply deeper jets.
    #[error("order budget exceeded in {context}: needed {needed}, available {available}")]
    OrderBudget {
        needed: usize,
        available: usize,
        context: String,
    },

    /// Metric component matrix is singular (or fails its declared signature).
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    /// Operation undefined or unsupported in this chart dimension.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// Operation restricted to a specific conformal weight was fed another.
    #[error("unsupported weight: {0}")]
    UnsupportedWeight(String),

    /// Conormal is null or vanishing where a non-degenerate one is required.
    #[error("degenerate hypersurface: {0}")]
    DegenerateHypersurface(String),

    /// An internal cross-check failed beyond tolerance; indicates a bug or an
    /// input outside the operation's validity range, never ignored.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    /// A field is singular where the calculus would need to evaluate it.
    #[error("regularity unverifiable: {0}")]
    RegularityUnverifiable(String),

    /// Expression or geometry-file parsing failed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
