use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("evaluation error at {node}: {msg}")]
    Eval { node: String, msg: String },
    #[error("singular edge: {0}")]
    SingularEdge(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("observation {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn eval(node: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Eval { node: node.into(), msg: msg.into() }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_input(&self) -> bool {
        match self {
            Error::Model(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => true,
            Error::Row { source, .. } => source.is_input(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
