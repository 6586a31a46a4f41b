use thiserror::Error;

use crate::quad::QuadError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("kernel derivative is singular at (t, s) = ({t}, {s})")]
    Singular { t: f64, s: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical integration failed in {context}: {source}")]
    Quadrature {
        context: &'static str,
        #[source]
        source: QuadError,
    },

    #[error("non-finite functional value on path {path} of stream {stream:#x}")]
    PoisonedEstimate { stream: u64, path: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait QuadContext<T> {
    fn context(self, context: &'static str) -> Result<T>;
}

impl<T> QuadContext<T> for std::result::Result<T, QuadError> {
    fn context(self, context: &'static str) -> Result<T> {
        self.map_err(|source| Error::Quadrature { context, source })
    }
}
