use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by geometry validation, estimation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A source position (true or hypothesized) coincides with a sensor.
    #[error("source coincides with sensor {index} (separation {separation:.3e} m)")]
    DegenerateGeometry { index: usize, separation: f64 },

    /// The pseudo-linear regressor is rank deficient or too ill-conditioned
    /// to solve (near-colinear sensor arrays beyond recovery).
    #[error("sensor geometry is rank deficient (condition estimate {condition:.3e})")]
    GeometryRank { condition: f64 },

    /// The Fisher information matrix is singular for this geometry.
    #[error("Fisher information matrix is singular; source state is unobservable")]
    UnobservableGeometry,

    #[error("need at least {needed} sensors, got {got}")]
    InsufficientSensors { needed: usize, got: usize },

    /// The measurement covariance could not be factorized (not positive definite).
    #[error("measurement covariance is not positive definite")]
    CovarianceFactorization,

    /// The two nuisance quadratics are proportional, so their resultant
    /// vanishes identically and the common roots are not isolated.
    #[error("nuisance quadratics are proportional; resultant vanishes identically")]
    RankDeficientQuadratics,

    /// Neither the ratio-of-determinants formula nor the quadratic fallback
    /// yields a range rate for this range candidate.
    #[error("no range-rate solution for range candidate v = {v}")]
    NoVdotSolution { v: f64 },

    #[error("estimation failed: {reason}")]
    EstimationFailure { reason: String },

    #[error("no admissible geometry after {attempts} rejection-sampling attempts")]
    GeometryGeneration { attempts: usize },

    #[error("statistic undefined: every trial in the cell failed")]
    UndefinedStatistic,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("parse error in {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
