use std::io;

/// Errors of the std-side tooling: core failures, IO and model files.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lipkernel_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad model file magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("model file version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("payload checksum {found:#010x} does not match stored {stored:#010x}")]
    ChecksumMismatch { stored: u32, found: u32 },
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
