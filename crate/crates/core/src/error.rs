use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperParam { name: &'static str, reason: String },

    #[error("sampled recurrent matrix has no nonzero entry; raise connectivity or change the seed")]
    AllZeroRecurrent,

    #[error("recurrent matrix is nilpotent after {attempts} resampling attempts; spectral radius cannot be set")]
    DegenerateSpectrum { attempts: usize },

    #[error("reservoir state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("coefficient a1(t) vanishes at t = {t}")]
    SingularCoefficient { t: f64 },

    #[error("regularized Gram matrix is ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("loss became non-finite")]
    NonFiniteLoss,

    #[error("integration blew up at t = {t}")]
    NonFinite { t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
