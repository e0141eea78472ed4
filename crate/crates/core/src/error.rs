//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown function symbol '{name}' at position {position}")]
    UnknownFunction { name: String, position: usize },

    #[error("unbound symbol '{0}' in evaluation")]
    UnboundSymbol(String),

    #[error("unbound function symbol '{0}' in evaluation")]
    UnboundFunction(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape violation: {0}")]
    Shape(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("transformation is not invertible on the domain: {0}")]
    NotInvertible(String),

    #[error("unsupported by the closed template grammar: {0}")]
    OutsideGrammar(String),

    #[error("numeric sampling failed: {0}")]
    Sampling(String),

    #[error("internal oracle disagreement: {0}")]
    OracleDisagreement(String),

    #[error("unknown catalog entry '{0}'")]
    UnknownEntry(String),

    #[error("catalog data error: {0}")]
    CatalogData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
