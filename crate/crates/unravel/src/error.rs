//! Error type shared by the numerical modules.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator contains non-finite entries")]
    NonFiniteOperator,

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("coupling matrix is not completely positive (eigenvalue {min_eigenvalue:.3e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("channel index {index} out of range for {count} channels")]
    InvalidChannel { index: usize, count: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("records do not share a common sample grid")]
    GridMismatch,

    #[error("no jump possible: all channel weights vanish")]
    NoJumpPossible,

    #[error("jump operator annihilates the state")]
    ZeroAmplitudeJump,

    #[error("steady state is not unique (kernel dimension {kernel_dim})")]
    NonUniqueSteadyState { kernel_dim: usize },

    #[error("count cutoff too small: P_{m_max} = {p_tail:.3e} exceeds the aliasing guard")]
    AliasingGuard { m_max: usize, p_tail: f64 },

    #[error("photon-number ladder truncated: captured weight {total:.6} < 1 - 1e-4")]
    HierarchyTruncated { total: f64 },

    #[error("Fock truncation guard tripped at t = {time:.6}: top-level population {population:.3e}")]
    TruncationExceeded { time: f64, population: f64 },

    #[error("correlation lags are not uniformly spaced")]
    NonUniformLags,

    #[error("count times must be strictly increasing within (0, t]")]
    UnorderedTimes,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
