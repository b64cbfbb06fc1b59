use thiserror::Error;

/// Every failure mode the library reports.  Message strings are part of the
/// public contract; callers match on them in the verification harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("charge out of range")]
    ChargeOutOfRange,
    #[error("metric not positive definite at probe points")]
    MetricNotPositiveDefinite,
    #[error("null vector")]
    NullVector,
    #[error("on the Finsleroid axis slit")]
    AxisSlit,
    #[error("no real arc")]
    NoRealArc,
    #[error("BVP failed")]
    BvpFailed,
    #[error("conjugate endpoints, expansion singular")]
    ConjugateEndpoints,
    #[error("quadrature resolution too low")]
    QuadratureTooCoarse,
    #[error("angle cosine outside numerical domain")]
    AngleDomain,
    #[error("singular matrix")]
    SingularMatrix,
    #[error("unsupported rank")]
    UnsupportedRank,
    #[error("curvature derivatives unavailable in finite-difference mode")]
    MissingRiemannDerivative,
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;
