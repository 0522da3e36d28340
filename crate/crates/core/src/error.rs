use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("truncated stream: expected {expected} bytes, got {got}")]
    TruncatedStream { expected: usize, got: usize },

    #[error("invalid kernel size {0}: must be odd and >= 1")]
    InvalidKernel(usize),

    #[error("roi is empty")]
    EmptyRoi,

    #[error("roi {x},{y} {w}x{h} exceeds frame {frame_w}x{frame_h}")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        frame_w: usize,
        frame_h: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("reference classifier needs at least 2 classes with samples, got {0}")]
    InsufficientClasses(usize),

    #[error("adapter unavailable: {0}")]
    AdapterUnavailable(String),

    #[error("adapter protocol error: {0}")]
    Protocol(String),

    #[error("adapter timed out after {0} ms")]
    Timeout(u64),

    #[error("no power samples")]
    NoSamples,

    #[error("degenerate run: latency and power must be positive (latency {latency_ms} ms, power {power_w} W)")]
    DegenerateRun { latency_ms: f64, power_w: f64 },

    #[error("empty run")]
    EmptyRun,

    #[error("source has {0} frame(s), need at least 2")]
    SourceTooShort(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
