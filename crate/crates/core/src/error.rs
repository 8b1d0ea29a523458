use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),

    #[error("mean-field equation has no positive real root")]
    NoRoot,
    #[error("drive lies in the bistable window ({roots:?}); select a branch")]
    AmbiguousBranch { roots: Vec<f64> },
    #[error("excitation spectrum is gapless or unstable at k = {k}")]
    GaplessOrUnstable { k: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StiffnessFailure { t: f64, h: f64 },
    #[error("trajectory {trajectory} blew up at t = {t}")]
    NumericalBlowup { trajectory: usize, t: f64 },
    #[error("detection arm at zero momentum (k = {k}, q = {q})")]
    ZeroMomentumArm { k: usize, q: usize },
    #[error("correlator basis too large: {count} indices exceeds cap {cap}")]
    TooLarge { count: usize, cap: usize },
    #[error("internal mismatch: {0}")]
    InternalMismatch(String),
    #[error("singular system: {detail}")]
    SingularSystem { detail: String },
    #[error("singular linear response at k = {k} (det = {det:e})")]
    SingularResponse { k: f64, det: f64 },
    #[error("mode k = {k} is evanescent (sin theta = {sin_theta})")]
    Evanescent { k: f64, sin_theta: f64 },

    #[error("not converged by t = {t} (last residual {residual:e})")]
    NotConverged { t: f64, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Families used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Numerical,
    NotConverged,
    Io,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            InvalidParams(_) | Config(_) => ErrorFamily::Config,
            NotConverged { .. } => ErrorFamily::NotConverged,
            Io(_) | Csv(_) | Json(_) => ErrorFamily::Io,
            _ => ErrorFamily::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.family() {
            ErrorFamily::Config => 2,
            ErrorFamily::Numerical => 3,
            ErrorFamily::NotConverged => 4,
            ErrorFamily::Io => 5,
        }
    }
}
