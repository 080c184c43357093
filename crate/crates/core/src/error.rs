use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset too small: n = {n}, n >= {min} required")]
    TooSmall { n: usize, min: usize },

    #[error("invalid study {index}: {reason}")]
    InvalidStudy { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
