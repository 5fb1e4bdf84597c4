use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by loaders, signal operations and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("{path}: not a binary PPM (P6): {msg}")]
    PpmFormat { path: PathBuf, msg: String },

    #[error("{context}: expected {expected} bytes/pixels, got {actual}")]
    GeometryMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{path} line {line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path} line {line}: time not strictly increasing")]
    NonMonotoneTime { path: PathBuf, line: usize },

    #[error("{path} line {line}: hr_bpm must be > 0")]
    NonPositiveHr { path: PathBuf, line: usize },

    #[error("{path}: fewer than 2 data rows")]
    TooFewRows { path: PathBuf },

    #[error("roi frame index {index} out of range (n_frames = {n_frames})")]
    IndexOutOfRange { index: usize, n_frames: usize },

    #[error("roi frame index {index} appears more than once")]
    DuplicateIndex { index: usize },

    #[error("roi frame index {index} missing")]
    MissingIndex { index: usize },

    #[error("roi box ({x},{y},{w},{h}) outside {width}x{height} frame")]
    BoxOutsideFrame {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("no pixel satisfies the skin rule")]
    NoSkinPixels,

    #[error("length mismatch: {expected} vs {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample-rate mismatch: {a} Hz vs {b} Hz")]
    FsMismatch { a: f64, b: f64 },

    #[error("non-finite sample in {context}")]
    NonFinite { context: String },

    #[error("{context}: need at least {needed} samples, got {got}")]
    TooShort {
        context: String,
        needed: usize,
        got: usize,
    },

    #[error("detrend window of {samples} samples is below the 3-sample minimum")]
    WindowTooSmall { samples: usize },

    #[error("covariance is singular (constant or duplicate channel)")]
    SingularCovariance,

    #[error("band [{low}, {high}] Hz invalid for fs {fs} Hz")]
    BandInvalid { low: f64, high: f64, fs: f64 },

    #[error("no spectrum bins inside the band")]
    EmptyBand,

    #[error("all in-band power is zero")]
    ZeroPower,

    #[error("trace of {got} samples shorter than one {needed}-sample window")]
    TraceTooShort { needed: usize, got: usize },

    #[error("need at least 2 (estimate, truth) pairs, got {got}")]
    TooFewPairs { got: usize },

    #[error("estimate and ground-truth time ranges do not overlap")]
    NoOverlap,

    #[error("invalid synthesis spec: {msg}")]
    InvalidSpec { msg: String },

    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
