use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid shape {height}x{width} does not match buffer length {len}")]
    InvalidShape {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("mask pixel {index} has value {value}, expected 0 or 1")]
    InvalidPixel { index: usize, value: u8 },
    #[error("value {value} at index {index} lies outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("contrastive batch has no anchor with both a positive and a negative")]
    DegenerateBatch,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("could only place {placed} of {requested} blobs in a {height}x{width} grid")]
    Capacity {
        placed: usize,
        requested: usize,
        height: usize,
        width: usize,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
