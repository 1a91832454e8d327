//! Error type shared by all modules.

/// Errors reported by constructors, evaluators, detectors and simulators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters at construction time.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// The integrand appears to be non-integrable (contributions keep growing).
    #[error("integrability error: {0}")]
    Integrability(String),

    /// A density normalization check failed beyond tolerance.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Tabulated density queried outside its grid.
    #[error("extrapolation error: x={x} outside table grid [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    /// No sampling scheme is available for this spec.
    #[error("unsupported sampler: {0}")]
    UnsupportedSampler(String),

    /// Finite differences lost more bits than the working precision provides.
    #[error("insufficient precision: {0}")]
    Precision(String),

    /// A construction degenerated to zero mass or an empty object.
    #[error("degenerate construction: {0}")]
    Degenerate(String),

    /// Catalog lookup with an unknown name.
    #[error("unknown catalog entry: {0}")]
    UnknownCatalog(String),

    /// Density has interior zeros, so a log-based test cannot run on one interval.
    #[error("split support: {0}")]
    SplitSupport(String),

    /// Closed-form expression evaluated outside its real branch.
    #[error("branch error: {0}")]
    Branch(String),

    /// Simulation horizon too short for the requested accuracy.
    #[error("horizon error: {0}")]
    Horizon(String),

    /// Exact-algebra verification found a nonzero residual.
    #[error("algebra error: {0}")]
    Algebra(String),
}

pub type Result<T> = std::result::Result<T, Error>;
