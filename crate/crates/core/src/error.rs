use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bit budget exceeded: {used} bits in use, requested {requested}, capacity {capacity}")]
    BudgetExceeded {
        used: u64,
        requested: u64,
        capacity: u64,
    },

    #[error("access out of region bounds: offset {offset} + width {width} > region width {region_width}")]
    OutOfBounds {
        offset: u64,
        width: u32,
        region_width: u64,
    },

    #[error("value {value} does not fit in {width} bits")]
    ValueTooWide { value: u64, width: u32 },

    #[error("malformed encoding: {0}")]
    Format(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
