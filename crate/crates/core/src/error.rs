use thiserror::Error;

/// Errors raised by the numerical engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("invalid physical parameters ({field}): {reason}")]
    InvalidParams { field: &'static str, reason: String },

    #[error("field does not live on the expected configuration space")]
    SpaceMismatch,

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at grid index {index}")]
    NonFinite { index: usize },

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("kernel not localized: {mass:.3e} of the probability sits on the half-box shell (alpha = {alpha:.6e})")]
    KernelNotLocalized { alpha: f64, mass: f64 },

    #[error("target step {target:.6e} is below the one-cell floor {floor:.6e}")]
    StepBelowGridFloor { target: f64, floor: f64 },

    #[error("target step {target:.6e} cannot be bracketed; achievable range is [{min:.6e}, {max:.6e}]")]
    Unbracketable { target: f64, min: f64, max: f64 },

    #[error("invalid multiplier: {0}")]
    InvalidMultiplier(String),

    #[error("time step {dt:.6e} exceeds the stability bound dt_max = {dt_max:.6e}")]
    Unstable { dt: f64, dt_max: f64 },

    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),

    #[error("destination {index} receives zero probability under the forward kernel")]
    ZeroPushforward { index: usize },

    #[error("wavefunction vanishes everywhere")]
    VanishingWavefunction,

    #[error("ensemble mismatch: {0}")]
    EnsembleMismatch(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
