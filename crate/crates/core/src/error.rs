use thiserror::Error;

/// Diagnostics raised by the runtime and the foreign-interface layers.
///
/// Every misuse the runtime can detect is reported as one of these; none of
/// them unwinds, callers get them back as ordinary `Err` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Error {
    #[error("semispace of {words} words is too small (minimum {min})")]
    TooSmall { words: usize, min: usize },
    #[error("integer {0} does not fit in an immediate value")]
    LongOutOfRange(i64),
    #[error("value is not an immediate integer")]
    NotImmediate,
    #[error("value is not a block")]
    NotABlock,
    #[error("value refers to a block that was moved by the collector")]
    StaleValue,
    #[error("value does not refer to any allocated block")]
    OutOfRangeValue,
    #[error("field index {index} out of bounds for block of size {size}")]
    IndexOutOfBounds { index: usize, size: usize },
    #[error("operation not permitted on block with tag {tag}")]
    WrongTag { tag: u8 },
    #[error("heap exhausted while allocating {requested} words")]
    HeapExhausted { requested: usize },
    #[error("runtime lock is released")]
    RuntimeReleased,
    #[error("frame is not the innermost live frame")]
    NotInnermostFrame,
    #[error("frame ended from a different execution context")]
    FrameContextMismatch,
    #[error("value is not a closure")]
    NotAClosure,
    #[error("slot is not registered with any root provider")]
    UnregisteredRoot,
    #[error("destination slot aliases an input slot")]
    AliasedRoots,
    #[error("no region has been entered")]
    NoCurrentRegion,
    #[error("region is not the current region")]
    NotCurrentRegion,
    #[error("region is disabled while a callback runs")]
    RegionDisabled,
    #[error("sub-regions must be left in reverse order of entry")]
    SubRegionOrderViolation,
    #[error("runtime lock is already released")]
    AlreadyReleased,
    #[error("runtime lock is not released")]
    NotReleased,
    #[error("lock release and acquire are not bracketed with regions")]
    LockOrderViolation,
    #[error("innermost region is not a reacquired region")]
    NotReacquiredRegion,
    #[error("region used from a different execution context")]
    RegionContextMismatch,
}

impl Error {
    /// Stable identifier used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TooSmall { .. } => "TooSmall",
            Error::LongOutOfRange(_) => "LongOutOfRange",
            Error::NotImmediate => "NotImmediate",
            Error::NotABlock => "NotABlock",
            Error::StaleValue => "StaleValue",
            Error::OutOfRangeValue => "OutOfRangeValue",
            Error::IndexOutOfBounds { .. } => "IndexOutOfBounds",
            Error::WrongTag { .. } => "WrongTag",
            Error::HeapExhausted { .. } => "HeapExhausted",
            Error::RuntimeReleased => "RuntimeReleased",
            Error::NotInnermostFrame => "NotInnermostFrame",
            Error::FrameContextMismatch => "FrameContextMismatch",
            Error::NotAClosure => "NotAClosure",
            Error::UnregisteredRoot => "UnregisteredRoot",
            Error::AliasedRoots => "AliasedRoots",
            Error::NoCurrentRegion => "NoCurrentRegion",
            Error::NotCurrentRegion => "NotCurrentRegion",
            Error::RegionDisabled => "RegionDisabled",
            Error::SubRegionOrderViolation => "SubRegionOrderViolation",
            Error::AlreadyReleased => "AlreadyReleased",
            Error::NotReleased => "NotReleased",
            Error::LockOrderViolation => "LockOrderViolation",
            Error::NotReacquiredRegion => "NotReacquiredRegion",
            Error::RegionContextMismatch => "RegionContextMismatch",
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
