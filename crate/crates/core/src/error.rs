//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Reduction axis outside the tensor's rank.
    #[error("axis out of range: {0}")]
    Axis(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid model or run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents (PPM, SDLW, config, numeric lists).
    #[error("format error: {0}")]
    Format(String),

    /// Dataset directory problems (missing or empty class directories).
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Value outside its documented domain (pixel range, label index).
    #[error("range error: {0}")]
    Range(String),

    /// Statistically degenerate input (zero pooled variance).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Too few observations for the requested test.
    #[error("sample size error: {0}")]
    SampleSize(String),

    /// Benchmark cannot run (empty frame source).
    #[error("bench error: {0}")]
    Bench(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
