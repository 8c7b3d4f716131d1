use std::ops::Range;

use thiserror::Error;

pub type Result<T, E = PrancError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PrancError {
    #[error("basis index {index} out of range for k = {k}")]
    BasisIndex { index: usize, k: usize },

    #[error("flat range {start}..{end} out of bounds for d = {d}")]
    RangeOutOfBounds { start: usize, end: usize, d: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid model definition: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(String),

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: Vec<u8>, found: Vec<u8> },

    #[error("unsupported format version {0:#06x}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("schema fingerprint mismatch: packet {packet:#018x}, local {local:#018x}")]
    FingerprintMismatch { packet: u64, local: u64 },

    #[error("truncated input: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("packet carries no seed; supply the master seed out of band")]
    MissingSeed,

    #[error("on-demand budget {budget} is smaller than the largest weight block ({required})")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("regression diverged at iteration {iteration}: residual {residual:e} (previous {previous:e}, step {step:e})")]
    Divergence {
        iteration: usize,
        residual: f64,
        previous: f64,
        step: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dataset format: {0}")]
    DataFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PrancError {
    pub(crate) fn range(range: &Range<usize>, d: usize) -> Self {
        PrancError::RangeOutOfBounds {
            start: range.start,
            end: range.end,
            d,
        }
    }
}

pub(crate) fn check_range(range: &Range<usize>, d: usize) -> Result<()> {
    if range.start > range.end || range.end > d {
        return Err(PrancError::range(range, d));
    }
    Ok(())
}
