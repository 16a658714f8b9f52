use alloc::string::String;

/// Errors produced by the alignment core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("degenerate shape: all points coincide")]
    DegenerateShape,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("forest is frozen to greedy evaluation and cannot be trained")]
    Frozen,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("stage ordering violated: explicit stage at position {0} precedes a parametric stage")]
    StageOrder(usize),
    #[error("degenerate image {width}x{height}")]
    DegenerateImage { width: usize, height: usize },
    #[error("degenerate bounding box: {0}")]
    DegenerateBox(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
