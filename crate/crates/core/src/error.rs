use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Fermionic symmetrization of linearly dependent one-particle states.
    #[error("symmetrized state has zero norm ({norm:.3e}); inputs are linearly dependent")]
    ZeroNorm { norm: f64 },
    #[error("index {index} out of range for {len} parties")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("contract `{contract}` violated: {detail}")]
    Contract {
        contract: &'static str,
        detail: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical instability: {0}")]
    Instability(String),
}

impl Error {
    pub(crate) fn contract(contract: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            contract,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
