use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite sample at node {index} (x = {coords:?}): {value}")]
    Sampling {
        index: usize,
        coords: Vec<f64>,
        value: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    Shape(String),
    #[error("(h1) violated: {0}")]
    H1(String),
    #[error("threshold error: {0}")]
    Threshold(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("degenerate mountain-pass path: {0}")]
    DegeneratePath(String),
    #[error("path search failed: {0}")]
    PathSearch(String),
    #[error("field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
