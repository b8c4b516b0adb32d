use std::path::PathBuf;

/// Errors raised by the detectors, the forgery lab and image I/O.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// The file could not be opened, read or written.
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file is recognized but its contents are malformed (truncated data, bad header, ...).
    #[error("malformed image data: {0}")]
    Format(String),

    /// The file is not PGM (P5, maxval 255), 8-bit PNG or the f64 sidecar format.
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    /// The declared dimensions do not fit in memory or overflow the pixel count.
    #[error("image dimensions {width}x{height} overflow the supported pixel count")]
    DimensionOverflow { width: u64, height: u64 },

    /// A caller-side contract was violated (block larger than the image, bad factor, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The zeroth moment of a region is zero, so its normalized moments are undefined.
    #[error("degenerate image: zeroth-order moment is zero")]
    DegenerateImage,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The ground-truth mask has no flagged pixel, so the detection rate is undefined.
    #[error("ground truth mask is empty; detection rate is undefined")]
    EmptyTruth,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
