use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),

    #[error("extract from an empty heap")]
    EmptyHeap,

    #[error("arena exhausted: requested {requested} words with {available} available")]
    ArenaExhausted { requested: u64, available: u64 },

    #[error("k-merger arity {0} is not a power of two >= 2")]
    BadArity(usize),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
