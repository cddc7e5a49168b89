use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("not an msvr bitstream")]
    NotABitstream,
    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u8),
    #[error("stream is incompatible with model: {0}")]
    IncompatibleModel(String),
    #[error("image format error: {0}")]
    ImageFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::CorruptStream(msg.into())
    }
}
