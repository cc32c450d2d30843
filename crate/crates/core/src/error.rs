use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The e>1 surrogate was evaluated where its linearized denominator is not positive.
    #[error("surrogate pole: linearized denominator {0} is not positive")]
    Pole(f64),

    #[error("image size {image_size} is not divisible by 2^{shift}")]
    FractionalFeatureMap { image_size: u64, shift: u32 },

    #[error("degenerate regularizer: {0}")]
    DegenerateRegularizer(String),

    #[error("stacked channel matrix is rank deficient")]
    RankDeficient,

    #[error("zero-forcing needs at most {n_t} users, got {users}")]
    TooManyUsers { users: usize, n_t: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("QoS infeasible: {0}")]
    Infeasible(String),

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
