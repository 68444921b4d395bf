use thiserror::Error;

/// Errors produced anywhere in the codec.
///
/// Every failure carries a stable category name ([`Error::category`]) so
/// callers such as the CLI can report machine-parsable error classes.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor violates its shape or finiteness invariants.
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    /// An argument violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor shapes cannot be fused, packed or unpacked as requested.
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// Statistics parameters are not encodable (non-finite, wrong arity).
    #[error("invalid statistics: {0}")]
    InvalidStats(String),

    /// The input ended before a complete structure could be read.
    #[error("truncated stream: {0}")]
    TruncatedStream(String),

    /// The input does not start with the expected magic.
    #[error("not a stream: {0}")]
    NotAStream(String),

    /// The input is structurally inconsistent beyond simple truncation.
    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    /// Mux inputs are mutually inconsistent.
    #[error("mux error: {0}")]
    MuxError(String),

    /// The codec id is not registered.
    #[error("unknown codec id {0}")]
    UnknownCodec(u8),

    /// An inner-codec payload could not be decoded.
    #[error("payload decode error: {0}")]
    DecodeError(String),

    /// An external codec process failed.
    #[error("external codec error: {0}")]
    ExternalCodecError(String),

    /// Rate/accuracy curves do not overlap in accuracy.
    #[error("curves have no overlapping accuracy range")]
    NoOverlap,

    /// A rate/accuracy curve has fewer points than the method requires.
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),

    /// A rate/accuracy curve is malformed (non-monotone, non-finite, ...).
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category name for machine-parsable reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidTensor(_) => "InvalidTensor",
            Error::InvalidInput(_) => "InvalidInput",
            Error::UnsupportedGeometry(_) => "UnsupportedGeometry",
            Error::InvalidStats(_) => "InvalidStats",
            Error::TruncatedStream(_) => "TruncatedStream",
            Error::NotAStream(_) => "NotAStream",
            Error::CorruptStream(_) => "CorruptStream",
            Error::MuxError(_) => "MuxError",
            Error::UnknownCodec(_) => "UnknownCodec",
            Error::DecodeError(_) => "DecodeError",
            Error::ExternalCodecError(_) => "ExternalCodecError",
            Error::NoOverlap => "NoOverlap",
            Error::InsufficientPoints(_) => "InsufficientPoints",
            Error::InvalidCurve(_) => "InvalidCurve",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
