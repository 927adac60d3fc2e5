use std::io;

use thiserror::Error;

/// Errors produced anywhere in the sounder pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("angle {angle_deg}° outside steering range [{min_deg}°, {max_deg}°]")]
    SteeringRange {
        angle_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },

    #[error("signal has zero power; PAPR undefined")]
    UndefinedPower,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("tone grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-uniform snapshot timestamps: {0}")]
    NonUniformTimestamps(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected \"SNDR\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} (reader supports {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated file in section `{section}`")]
    Truncated { section: String },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed {artifact}: {msg}")]
    Format { artifact: &'static str, msg: String },
}

/// Coarse error classes, used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Format,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Checksum { .. }
            | Error::Format { .. } => ErrorKind::Format,
            _ => ErrorKind::Validation,
        }
    }

    pub fn format(artifact: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            artifact,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
