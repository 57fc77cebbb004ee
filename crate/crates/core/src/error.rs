use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible state: density {rho:e}, pressure {p:e}")]
    Admissibility { rho: f64, p: f64 },

    #[error("invalid entropy variables: last component {w_last:e} must be negative")]
    InvalidEntropyState { w_last: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("mesh error in element {element}, node {node}: Jacobian {jacobian:e} is not positive")]
    Mesh {
        element: usize,
        node: usize,
        jacobian: f64,
    },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("element {element}, node {node}: {source}")]
    AtNode {
        element: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("solution diverged at step {step} (t = {time:e}): non-finite state after stage {stage}")]
    Divergence { step: usize, stage: usize, time: f64 },

    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_node(self, element: usize, node: usize) -> Self {
        match self {
            e @ Error::AtNode { .. } => e,
            e => Error::AtNode {
                element,
                node,
                source: Box::new(e),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
