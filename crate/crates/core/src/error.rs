use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(String),

    #[error("no transition in range [{lo}, {hi}]")]
    NoTransition { lo: f64, hi: f64 },

    #[error("below threshold: {0}")]
    BelowThreshold(String),

    #[error("self-orthogonal mode (at exceptional point): |int u^2| = {0:e}")]
    SelfOrthogonalMode(f64),

    #[error("non-finite field at t = {t}")]
    NonFinite { t: f64 },

    #[error("trajectory diverged at t = {t} (|a| = {amplitude:e})")]
    Diverged { t: f64, amplitude: f64 },

    #[error("insufficient cycles: found {0} upward crossings, need at least 3")]
    InsufficientCycles(usize),

    #[error("polar chart singular: r1 = {r1}, r2 = {r2}")]
    PolarSingular { r1: f64, r2: f64 },

    #[error("drift regime: sigma = {sigma} >= kappa = {kappa}")]
    DriftRegime { sigma: f64, kappa: f64 },

    #[error("locked regime: sigma = {sigma} <= kappa = {kappa}")]
    LockedRegime { sigma: f64, kappa: f64 },

    #[error("below oscillation threshold: r*^2 = {0}")]
    BelowOscillationThreshold(f64),

    #[error("denominator crosses zero at sample {index}")]
    SingularDenominator { index: usize },

    #[error("fewer than two real levels at gamma = 0")]
    MissingLevels,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
