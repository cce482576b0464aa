use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("no unique solution: {0}")]
    NoUniqueSolution(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("norm undefined: {0}")]
    NormUndefined(String),

    #[error("model reduction failed: {0}")]
    Reduction(String),

    #[error("projection inadmissible: {0}")]
    ProjectionInadmissible(String),

    #[error("image of B1 intersects image of L1 (rank [B1 L1] = {joint}, rank B1 + rank L1 = {sum})")]
    ImageOverlap { joint: usize, sum: usize },

    #[error("subspaces are not complementary: {0}")]
    Complementarity(String),

    #[error("invalid port binding: {0}")]
    Binding(String),

    #[error("operation requires a linear environment")]
    NonlinearEnvironment,

    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64, partial: Box<Trajectory> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
