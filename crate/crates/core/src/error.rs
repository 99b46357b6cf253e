use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("page budget of {budget} pages exhausted")]
    CapacityExhausted { budget: usize },

    #[error("invalid page {0}")]
    InvalidPage(u32),

    #[error("page image has {got} bits, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("bad parameters: {0}")]
    BadParameters(String),

    #[error("gadget over capacity ({len} > {capacity} elements), needs rebuild")]
    NeedsRebuild { len: usize, capacity: usize },

    #[error("dictionary full: {live} live keys exceed n_max = {n_max}")]
    Full { live: u64, n_max: u64 },

    #[error("malformed page file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn bad_params(msg: impl Into<String>) -> Error {
    Error::BadParameters(msg.into())
}
