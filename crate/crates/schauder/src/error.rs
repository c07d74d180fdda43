use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by the library.
///
/// Syntax and evaluation failures are kept separate so that callers (for
/// example the CLI) can map them to distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Expression text could not be parsed; `offset` is a byte position into
    /// the source string.
    #[error("syntax error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A function value could not be computed (domain error, non-finite
    /// result, or argument outside \[0,1\]).
    #[error("evaluation error at x = {x}: {message}")]
    Eval { x: f64, message: String },

    /// A parameter violates its documented range or a required option is
    /// missing.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// The collocation system has no unique solution.
    #[error("collocation system at level {level} is singular")]
    SingularSystem { level: u32 },

    /// The collocation system solves but cannot be trusted numerically.
    #[error("collocation system is ill-conditioned (estimated condition {cond:.3e} exceeds {limit:.1e})")]
    IllConditioned { cond: f64, limit: f64 },

    /// A truncation requested more series terms than the expansion holds.
    #[error("truncation requests {requested} terms but the expansion holds only {available}")]
    TruncationTooLong { requested: usize, available: usize },

    /// The basis kind cannot be used to synthesize partial sums.
    #[error("basis kind `{0}` cannot synthesize an expansion")]
    UnsupportedBasis(String),

    /// A geometric precondition failed while building an arrangement.
    #[error("geometry error: {0}")]
    Geometry(String),
}
