use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown letter '{0}'")]
    UnknownLetter(String),

    #[error("query outside support at t = {0}")]
    OutsideSupport(f64),

    #[error("zero-amplitude demonstration")]
    ZeroAmplitude,

    #[error("ill-conditioned Gram matrix ({0})")]
    IllConditioned(String),

    #[error("diverged rollout at step {0}")]
    DivergedRollout(usize),

    #[error("unsupported constraint for DMP: {0}")]
    UnsupportedConstraint(String),

    #[error("conflicting constraints at reference index {0}")]
    ConflictingConstraints(usize),

    #[error("singular covariance at step {0}")]
    SingularCovariance(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("cannot synthesize labels: {0}")]
    CannotSynthesize(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
