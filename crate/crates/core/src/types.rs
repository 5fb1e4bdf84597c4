//! Shared data model: frames, regions of interest, intensity traces and
//! heart-rate series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Color channel of an RGB trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// Whether a trace was averaged over the face ROI or the surrounding scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Foreground,
    Background,
}

/// Spatial-mean intensity of one channel over one region, sampled at `fs`.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub channel: Channel,
    pub region: Region,
}

impl ChannelTrace {
    pub fn new(samples: Vec<f64>, fs: f64, channel: Channel, region: Region) -> ChannelTrace {
        ChannelTrace {
            samples,
            fs,
            channel,
            region,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        let var =
            self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.samples.len() as f64;
        var.sqrt()
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        Ok(())
    }
}

/// The three foreground traces plus, when a background region exists, the
/// three background traces. All members share `fs` and length.
#[derive(Debug, Clone)]
pub struct ChannelTraceSet {
    pub foreground: [ChannelTrace; 3],
    pub background: Option<[ChannelTrace; 3]>,
    pub fs: f64,
}

impl ChannelTraceSet {
    pub fn len(&self) -> usize {
        self.foreground[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn foreground_channel(&self, channel: Channel) -> &ChannelTrace {
        &self.foreground[channel.index()]
    }
}

/// Decoded RGB8 frames with geometry and timing.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Interleaved RGB, `width*height*3` bytes per frame.
    pub frames: Vec<Vec<u8>>,
    /// Seconds, one per frame, strictly increasing.
    pub timestamps: Vec<f64>,
}

impl FrameSequence {
    /// Build a sequence whose timestamps are synthesized as `i / fps`.
    pub fn from_frames(
        width: usize,
        height: usize,
        fps: f64,
        frames: Vec<Vec<u8>>,
    ) -> Result<FrameSequence> {
        let expected = width * height * 3;
        for (i, f) in frames.iter().enumerate() {
            if f.len() != expected {
                return Err(Error::GeometryMismatch {
                    context: format!("frame {i}"),
                    expected,
                    actual: f.len(),
                });
            }
        }
        let timestamps = (0..frames.len()).map(|i| i as f64 / fps).collect();
        Ok(FrameSequence {
            width,
            height,
            fps,
            frames,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        &self.frames[i]
    }

    /// Unweighted channel mean `(R+G+B)/3` as a real-valued raster.
    pub fn luma(&self, i: usize) -> GrayImage {
        let f = self.frame(i);
        let data = f
            .chunks_exact(3)
            .map(|px| (px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Single-channel real-valued raster.
#[derive(Debug, Clone)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Axis-aligned region of interest, in whole pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl RoiBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> RoiBox {
        RoiBox { x, y, w, h }
    }

    pub fn ensure_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x + self.w > width || self.y + self.h > height {
            return Err(Error::BoxOutsideFrame {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width,
                height,
            });
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && x < (self.x + self.w) as f64 && y >= self.y as f64 && y < (self.y + self.h) as f64
    }

    /// Scale width and height by `factor` about the box center, clamped to
    /// the frame. Used to carve out the background region.
    pub fn dilate(&self, factor: f64, width: usize, height: usize) -> RoiBox {
        let cx = self.x as f64 + self.w as f64 / 2.0;
        let cy = self.y as f64 + self.h as f64 / 2.0;
        let hw = self.w as f64 * factor / 2.0;
        let hh = self.h as f64 * factor / 2.0;
        let x0 = (cx - hw).floor().max(0.0) as usize;
        let y0 = (cy - hh).floor().max(0.0) as usize;
        let x1 = ((cx + hw).ceil() as usize).min(width);
        let y1 = ((cy + hh).ceil() as usize).min(height);
        RoiBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// Translate by whole pixels, clamping so the box stays inside the frame.
    pub fn translated_clamped(&self, dx: f64, dy: f64, width: usize, height: usize) -> RoiBox {
        let x = (self.x as f64 + dx).round();
        let y = (self.y as f64 + dy).round();
        let max_x = (width - self.w) as f64;
        let max_y = (height - self.h) as f64;
        RoiBox {
            x: x.clamp(0.0, max_x) as usize,
            y: y.clamp(0.0, max_y) as usize,
            w: self.w,
            h: self.h,
        }
    }
}

/// Heart-rate estimates or ground truth over time.
#[derive(Debug, Clone, PartialEq)]
pub struct HrSeries {
    /// `(time_s, hr_bpm)`, times strictly increasing, hr finite and positive.
    pub samples: Vec<(f64, f64)>,
}

impl HrSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<HrSeries> {
        for (i, &(t, hr)) in samples.iter().enumerate() {
            if !t.is_finite() || !hr.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("hr series sample {i}"),
                });
            }
            if hr <= 0.0 {
                return Err(Error::InvalidSpec {
                    msg: format!("hr series sample {i}: hr {hr} not > 0"),
                });
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::InvalidSpec {
                    msg: format!("hr series sample {i}: time not strictly increasing"),
                });
            }
        }
        Ok(HrSeries { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(t, _)| t)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, hr)| hr)
    }

    /// Linear interpolation inside the covered range; None outside it.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].0 || t > s[s.len() - 1].0 {
            return None;
        }
        let idx = s.partition_point(|&(ts, _)| ts <= t);
        if idx == 0 {
            return Some(s[0].1);
        }
        if idx == s.len() {
            return Some(s[s.len() - 1].1);
        }
        let (t0, v0) = s[idx - 1];
        let (t1, v1) = s[idx];
        if t1 == t0 {
            return Some(v0);
        }
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

/// One-sided power spectral density on a uniform grid starting at 0 Hz.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Bin spacing in Hz.
    pub fn df(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        self.freqs[1] - self.freqs[0]
    }
}

/// Passband for pulse detection, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimits {
    pub low: f64,
    pub high: f64,
}

impl BandLimits {
    /// Default pulse band, 42-240 bpm.
    pub const DEFAULT: BandLimits = BandLimits {
        low: 0.7,
        high: 4.0,
    };

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high < fs / 2.0) {
            return Err(Error::BandInvalid {
                low: self.low,
                high: self.high,
                fs,
            });
        }
        Ok(())
    }
}
