use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("formula is not ground: free variable {0}")]
    NotGround(String),
    #[error("element {0} not in domain")]
    UnknownElement(String),
    #[error("map is not injective")]
    NotInjective(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("program is not stratified: negative cycle through {0}")]
    Stratification(String),
    #[error("probabilistic fact multiplicity: {0}")]
    Multiplicity(String),
    #[error("program is not determinate: {0}")]
    Determinacy(String),
    #[error("MLN is not sigma-determinate: {0}")]
    SigmaDeterminacy(String),
    #[error("RBN contains a combination function: {0}")]
    Fragment(String),
    #[error("regularity violation: conditioning structure has zero probability: {0}")]
    Regularity(String),
    #[error("family is not exchangeable: {0}")]
    Exchangeability(String),
    #[error("arity mismatch: {0}")]
    Arity(String),
    #[error("constants are not allowed here: {0}")]
    Constants(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("ground dependency graph is cyclic at {0}")]
    Cyclic(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
