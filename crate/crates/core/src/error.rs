use thiserror::Error;

/// Errors raised by the simulation kernels.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum Error {
    #[error("spin magnitude must be a positive half-integer, got {0}")]
    InvalidSpin(f64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("negative jump probability ({p1}, {p2}): operator or basis inconsistency")]
    NegativeProbability { p1: f64, p2: f64 },

    #[error("step too coarse: p1 + p2 = {total} >= 1 (dt = {dt})")]
    StepTooCoarse { total: f64, dt: f64 },

    #[error("jump applied to annihilated state at step {step}")]
    AnnihilatedJump { step: u64 },

    #[error("trajectory {trajectory} failed at step {step}: {source}")]
    Trajectory {
        trajectory: u64,
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("density matrix invalid: {0}")]
    InvalidDensityMatrix(String),

    #[error("positivity violated at step {step}: min eigenvalue {min_eigenvalue:e}")]
    PositivityViolation { step: u64, min_eigenvalue: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("sample {value} outside histogram range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("snapshot times differ: {0} vs {1}")]
    MixedSnapshotTimes(f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
