use thiserror::Error;

/// Violations of the init/step protocol between a learner and a system.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("step called before init")]
    NotInitialized,
    #[error("step called after the requested trace length was reached")]
    TraceComplete,
    #[error("action `{0}` is not understood by the system")]
    UnknownAction(String),
    #[error("replay source has no more recorded traces")]
    Exhausted,
    #[error("replayed trace expected action `{expected}`, got `{got}`")]
    ActionMismatch { expected: String, got: String },
    #[error("replayed trace has length {recorded}, requested {requested}")]
    TooShort { recorded: usize, requested: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {kind} `{symbol}`")]
    UnknownSymbol { kind: &'static str, symbol: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("observation has zero likelihood under the hypothesis")]
    ZeroLikelihood,
    #[error("every sequence in the dataset has zero likelihood under the hypothesis")]
    NoUsableSequences,
    #[error("not a Markov chain: {0}")]
    NotAChain(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
