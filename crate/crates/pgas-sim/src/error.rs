use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error("element index {index} out of range (numelems = {numelems})")]
    IndexOutOfRange { index: u64, numelems: u64 },

    #[error("pointer is not canonical for the given array spec: {0}")]
    NonCanonical(String),

    #[error("pointer field does not fit the packed layout: {0}")]
    PackOverflow(String),

    #[error("hardware increment path unsupported: {0}")]
    HwUnsupported(String),

    #[error("value {0} is not a power of two with a single bit set below 2^32")]
    NotPow2(u64),

    #[error("shared-pointer va underflow")]
    VaUnderflow,

    #[error("thread {0} missing from topology")]
    UnknownThread(u64),

    #[error("no base address registered for thread {0}")]
    MissingBaseAddress(u64),

    #[error("segment capacity exhausted for thread {thread}: need {need} bytes, {avail} available")]
    AllocationFailure { thread: u64, need: u64, avail: u64 },

    #[error("memory fault: address {addr:#x} (width {width}) outside any segment")]
    MemoryFault { addr: u64, width: u64 },

    #[error("unaligned access: address {addr:#x} for width {width}")]
    Misaligned { addr: u64, width: u64 },

    #[error("illegal instruction: {0}")]
    IllegalInstruction(String),

    #[error("field does not fit instruction encoding: {0}")]
    EncodingOverflow(String),

    #[error("pgas increment executed with the threads register uninitialized")]
    UninitializedThreads,

    #[error("division by zero")]
    DivisionByZero,

    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("kernel output disagrees with oracle: {0}")]
    KernelMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
