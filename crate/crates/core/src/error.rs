use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    /// The coder found no `b` in `0..=n` with `|x| <= beta(b) * r_prev`.
    #[error(
        "soundness violation at block {block}: |x| = {state_norm:e} exceeds beta(n) * r_prev = {bound:e}"
    )]
    Soundness {
        block: u64,
        state_norm: f64,
        bound: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no parameters found within the search budget (best lhs {best_lhs}, rhs {rhs})")]
    NotFound { best_lhs: f64, rhs: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed document: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
