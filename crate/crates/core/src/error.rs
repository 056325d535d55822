use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid range [{start}, {end}) for {asset_id} with {frame_count} frames")]
    InvalidRange {
        asset_id: String,
        start: u32,
        end: u32,
        frame_count: u32,
    },

    #[error("invalid video asset: {0}")]
    InvalidAsset(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing feature vector for clip {0}")]
    MissingFeature(String),

    #[error("zero-norm feature vector")]
    ZeroNorm,

    #[error("clip {clip_id} too short: {len} frames")]
    ClipTooShort { clip_id: String, len: u32 },

    #[error("unknown asset {0}")]
    UnknownAsset(String),

    #[error("caption transport failure: {0}")]
    CaptionTransport(String),

    #[error("malformed caption response: {0}")]
    CaptionResponse(String),

    #[error("external command failed: {0}")]
    Command(String),

    #[error("journal error: {0}")]
    Journal(String),

    #[error("broker error: {0}")]
    Broker(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether a worker should hand the task back to the broker instead of
    /// recording a failure straight away.
    pub fn is_retryable(&self) -> bool {
        !matches!(
            self,
            Error::CaptionResponse(_)
                | Error::InvalidRange { .. }
                | Error::ClipTooShort { .. }
                | Error::UnknownAsset(_)
                | Error::Parameter(_)
        )
    }
}
