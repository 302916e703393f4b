use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cube at level {level} exceeds the construction depth {depth}")]
    DepthExceeded { level: u32, depth: u32 },
    #[error("grid too coarse: {points} point(s) per cube, need at least 2")]
    ResolutionTooCoarse { points: usize },
    #[error("coefficients are not accretive on the range of D (kappa = {kappa:.3e})")]
    NotAccretive { kappa: f64 },
    #[error("eigenbasis condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditionedEigenbasis { cond: f64, limit: f64 },
    #[error("resolvent is singular at t = {t}")]
    ResolventSingular { t: f64 },
    #[error("normal block is singular at grid point {index}")]
    SingularNormalBlock { index: usize },
    #[error("coefficients are not hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("trace map is singular (smallest singular value {sigma_min:.3e})")]
    TraceMapSingular { sigma_min: f64 },
    #[error("incompatible boundary datum: {0}")]
    IncompatibleDatum(String),
    #[error("t-grid mismatch: {0}")]
    TGridMismatch(String),
    #[error("linear solver failed: {0}")]
    SolverSingular(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for errors caused by inputs violating a documented precondition
    /// (as opposed to malformed parameters).
    pub fn is_precondition(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}
