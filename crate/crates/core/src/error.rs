use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed time scale: {0}")]
    MalformedTimeScale(String),

    #[error("time scale is not Sturmian at t = {t}: sigma(rho(t)) = {sigma_rho}, rho(sigma(t)) = {rho_sigma}")]
    NotSturmian { t: f64, sigma_rho: f64, rho_sigma: f64 },

    #[error("point {0} does not belong to the time scale")]
    NotInTimeScale(f64),

    #[error("right shift requires a validated Sturmian time scale")]
    RightShiftUnavailable,

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("division by zero while evaluating expression")]
    DivisionByZero,

    #[error("non-finite value while evaluating expression at t = {0}")]
    NonFinite(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{block} is not Hermitian at t = {t} (deviation {deviation:.3e})")]
    NotHermitian { block: &'static str, t: f64, deviation: f64 },

    #[error("weight {block} is indefinite at t = {t} (smallest eigenvalue {min_eig:.3e})")]
    IndefiniteWeight { block: &'static str, t: f64, min_eig: f64 },

    #[error("I - nu*A is singular at t = {t}")]
    SingularShift { t: f64 },

    #[error("leading coefficient p_n vanishes at t = {t}")]
    VanishingLeadingCoefficient { t: f64 },

    #[error("scalar coefficient is not nu-regressive at t = {t}")]
    NotRegressive { t: f64 },

    #[error("I - nu*S is singular at t = {t}")]
    SingularStep { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("definiteness condition not attained on (t0, {horizon}]")]
    DefinitenessFailed { horizon: f64 },

    #[error("boundary matrix {which}: {message}")]
    Boundary { which: &'static str, message: String },

    #[error("trajectories are not comparable: {0}")]
    GridMismatch(String),

    #[error("no sample at t = {0} on the trajectory grid")]
    MissingSample(f64),

    #[error("Im lambda must be nonzero (got {0})")]
    RealLambda(f64),

    #[error("F22 is numerically singular at b = {b} (smallest eigenvalue {min_eig:.3e})")]
    SingularRadius { b: f64, min_eig: f64 },

    #[error("beta*phi(b) is singular at b = {b}")]
    SingularBoundaryBlock { b: f64 },

    #[error("eigenvalue search failed: {0}")]
    EigenSearch(String),

    #[error("invalid b list: {0}")]
    BList(String),

    #[error("eigenvalue track {track} of F22 decreases between b = {b_prev} and b = {b_next}")]
    NonMonotoneTrack { track: usize, b_prev: f64, b_next: f64 },

    #[error("rank estimate unstable: track {track} grew by a factor {ratio:.4} over the final doubling")]
    UnstableRank { track: usize, ratio: f64 },

    #[error("{path}: {source}")]
    Config { path: String, source: Box<Error> },

    #[error("config: {0}")]
    ConfigSyntax(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Wrap an error with the config field path that produced it.
    pub fn at(self, path: impl Into<String>) -> Error {
        Error::Config { path: path.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
