use thiserror::Error;

/// Errors produced by sketch construction, ingestion and stream parsing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("item {item} outside the domain [1, {n}]")]
    ItemOutOfRange { item: u64, n: u64 },

    #[error("accumulated update mass would exceed {limit}; counters could overflow")]
    Overflow { limit: u64 },

    #[error("stable accumulator became non-finite")]
    NonFinite,

    #[error("sketch needs {needed} bytes, above the configured cap of {cap} bytes")]
    MemoryCap { needed: u64, cap: u64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
