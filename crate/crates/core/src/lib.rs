//! Heart-rate estimation from RGB facial-video pixel traces.
//!
//! The pipeline mirrors a camera-based photoplethysmography chain: a face
//! ROI (external boxes or a skin-chroma fallback) is stabilized with
//! Shi-Tomasi + pyramidal Lucas-Kanade tracking, spatial-mean RGB traces
//! are extracted for the ROI and the surrounding background, the background
//! serves as the noise reference for NLMS illumination rectification, and
//! FastICA plus Welch spectral peak detection turn the rectified traces
//! into a heart-rate series on a sliding window.
//!
//! Everything is deterministic: random initialization (ICA) and synthetic
//! data (module [`synth`]) run from seeded generators.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod pulse;
pub mod rectify;
pub mod synth;
pub mod trace;
pub mod track;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    BandLimits, Channel, ChannelTrace, ChannelTraceSet, FrameSequence, GrayImage, HrSeries,
    Region, RoiBox, Spectrum,
};
