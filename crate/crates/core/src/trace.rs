//! Frames + ROI track -> per-channel intensity time series, plus the
//! conditioning steps applied before adaptive filtering and ICA.

use crate::error::{Error, Result};
use crate::track::RoiTrack;
use crate::types::{Channel, ChannelTrace, ChannelTraceSet, FrameSequence, Region};

/// Background region = complement of the ROI dilated by this factor.
pub const BACKGROUND_DILATION: f64 = 1.5;

/// Default detrend window in seconds.
pub const DEFAULT_DETREND_WINDOW_S: f64 = 1.5;

/// Spatial-mean RGB traces over the ROI (foreground) and over the
/// complement of the 1.5x-dilated ROI (background).
///
/// When the dilated box covers the whole frame on any frame, background
/// traces are omitted and a warning is recorded.
pub fn extract_channel_traces(
    frames: &FrameSequence,
    roi: &RoiTrack,
) -> Result<(ChannelTraceSet, Vec<String>)> {
    if roi.boxes.len() != frames.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len(),
            actual: roi.boxes.len(),
        });
    }
    let mut warnings = Vec::new();
    let n = frames.len();
    let mut fg = [vec![0.0; n].clone(), vec![0.0; n], vec![0.0; n]];
    let mut bg = [vec![0.0; n].clone(), vec![0.0; n], vec![0.0; n]];
    let mut bg_ok = true;

    for (t, frame) in frames.frames.iter().enumerate() {
        let b = &roi.boxes[t];
        b.ensure_inside(frames.width, frames.height)?;
        let dilated = b.dilate(BACKGROUND_DILATION, frames.width, frames.height);

        let mut fg_sum = [0.0f64; 3];
        let mut bg_sum = [0.0f64; 3];
        let mut bg_count = 0usize;
        for y in 0..frames.height {
            for x in 0..frames.width {
                let inside_roi = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
                let inside_dilated =
                    x >= dilated.x && x < dilated.x + dilated.w && y >= dilated.y && y < dilated.y + dilated.h;
                let px = (y * frames.width + x) * 3;
                if inside_roi {
                    for c in 0..3 {
                        fg_sum[c] += frame[px + c] as f64;
                    }
                } else if !inside_dilated {
                    for c in 0..3 {
                        bg_sum[c] += frame[px + c] as f64;
                    }
                    bg_count += 1;
                }
            }
        }
        let roi_count = (b.w * b.h) as f64;
        for c in 0..3 {
            fg[c][t] = fg_sum[c] / roi_count;
        }
        if bg_count == 0 {
            bg_ok = false;
        } else {
            for c in 0..3 {
                bg[c][t] = bg_sum[c] / bg_count as f64;
            }
        }
    }

    let fs = frames.fps;
    let foreground = [
        ChannelTrace::new(std::mem::take(&mut fg[0]), fs, Channel::R, Region::Foreground),
        ChannelTrace::new(std::mem::take(&mut fg[1]), fs, Channel::G, Region::Foreground),
        ChannelTrace::new(std::mem::take(&mut fg[2]), fs, Channel::B, Region::Foreground),
    ];
    let background = if bg_ok && n > 0 {
        Some([
            ChannelTrace::new(std::mem::take(&mut bg[0]), fs, Channel::R, Region::Background),
            ChannelTrace::new(std::mem::take(&mut bg[1]), fs, Channel::G, Region::Background),
            ChannelTrace::new(std::mem::take(&mut bg[2]), fs, Channel::B, Region::Background),
        ])
    } else {
        warnings.push(
            "dilated ROI covers the whole frame; background traces omitted".to_string(),
        );
        None
    };

    Ok((
        ChannelTraceSet {
            foreground,
            background,
            fs,
        },
        warnings,
    ))
}

/// Zero-mean, unit-variance scaling (population std). A constant trace
/// maps to all zeros.
pub fn normalize(trace: &ChannelTrace) -> Result<ChannelTrace> {
    if trace.len() < 2 {
        return Err(Error::TooShort {
            context: "normalize".into(),
            needed: 2,
            got: trace.len(),
        });
    }
    let mean = trace.mean();
    let std = trace.std();
    let samples = if std == 0.0 {
        vec![0.0; trace.len()]
    } else {
        trace.samples.iter().map(|x| (x - mean) / std).collect()
    };
    Ok(ChannelTrace::new(samples, trace.fs, trace.channel, trace.region))
}

/// Subtract a centered moving average (window truncated at the edges).
///
/// The window is forced to an odd sample count so that a linear trend
/// cancels exactly away from the edges.
pub fn detrend(trace: &ChannelTrace, window_s: f64) -> Result<ChannelTrace> {
    let requested = (window_s * trace.fs).round() as usize;
    if requested < 3 {
        return Err(Error::WindowTooSmall { samples: requested });
    }
    let half = requested / 2;
    let n = trace.len();
    // Prefix sums make each truncated-window mean O(1).
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &x in &trace.samples {
        prefix.push(prefix.last().unwrap() + x);
    }
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let ma = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            trace.samples[i] - ma
        })
        .collect();
    // Truncated edge windows leave a small DC residual; remove it so
    // detrended traces are exactly zero-mean.
    let residual = samples.iter().sum::<f64>() / n as f64;
    for s in &mut samples {
        *s -= residual;
    }
    Ok(ChannelTrace::new(samples, trace.fs, trace.channel, trace.region))
}

/// Linear interpolation of possibly-jittered samples onto a uniform grid
/// starting at the first timestamp. No extrapolation: the grid never
/// passes the last timestamp.
pub fn resample_uniform(
    samples: &[(f64, f64)],
    fs_out: f64,
    channel: Channel,
    region: Region,
) -> Result<ChannelTrace> {
    if samples.len() < 2 {
        return Err(Error::TooShort {
            context: "resample_uniform".into(),
            needed: 2,
            got: samples.len(),
        });
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::NonMonotoneTime {
                path: "<memory>".into(),
                line: 0,
            });
        }
    }
    let t0 = samples[0].0;
    let t_end = samples[samples.len() - 1].0;
    let mut out = Vec::new();
    let mut seg = 0usize;
    let mut k = 0usize;
    loop {
        let t = t0 + k as f64 / fs_out;
        if t > t_end * (1.0 + 1e-12) + 1e-12 {
            break;
        }
        let t = t.min(t_end);
        while seg + 2 < samples.len() && samples[seg + 1].0 < t {
            seg += 1;
        }
        let (ta, va) = samples[seg];
        let (tb, vb) = samples[seg + 1];
        out.push(va + (vb - va) * (t - ta) / (tb - ta));
        k += 1;
    }
    Ok(ChannelTrace::new(out, fs_out, channel, region))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{RoiSource, RoiTrack};
    use crate::types::RoiBox;
    use approx::assert_abs_diff_eq;

    fn solid_frames(w: usize, h: usize, n: usize, rgb: [u8; 3]) -> FrameSequence {
        let frame: Vec<u8> = (0..w * h).flat_map(|_| rgb).collect();
        FrameSequence::from_frames(w, h, 60.0, vec![frame; n]).unwrap()
    }

    fn track_of(boxes: Vec<RoiBox>) -> RoiTrack {
        RoiTrack {
            boxes,
            source: RoiSource::External,
            stabilized: false,
            offsets: vec![],
        }
    }

    #[test]
    fn constant_frames_give_constant_traces() {
        let frames = solid_frames(8, 8, 4, [10, 20, 30]);
        let roi = track_of(vec![RoiBox::new(2, 2, 3, 3); 4]);
        let (set, warnings) = extract_channel_traces(&frames, &roi).unwrap();
        assert!(warnings.is_empty());
        assert!(set.foreground[0].samples.iter().all(|&v| v == 10.0));
        assert!(set.foreground[1].samples.iter().all(|&v| v == 20.0));
        assert!(set.foreground[2].samples.iter().all(|&v| v == 30.0));
        assert_eq!(set.fs, 60.0);
    }

    #[test]
    fn foreground_background_separation() {
        // ROI pixels 0, everything else 255.
        let w = 16;
        let h = 16;
        let b = RoiBox::new(6, 6, 4, 4);
        let mut frame = vec![255u8; w * h * 3];
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let px = (y * w + x) * 3;
                frame[px..px + 3].copy_from_slice(&[0, 0, 0]);
            }
        }
        let frames = FrameSequence::from_frames(w, h, 60.0, vec![frame]).unwrap();
        let roi = track_of(vec![b]);
        let (set, _) = extract_channel_traces(&frames, &roi).unwrap();
        let bg = set.background.expect("background");
        for c in 0..3 {
            assert_eq!(set.foreground[c].samples[0], 0.0);
            assert_eq!(bg[c].samples[0], 255.0);
        }
    }

    #[test]
    fn hand_mean_of_two_green_pixels() {
        let w = 4;
        let h = 4;
        let mut frame = vec![0u8; w * h * 3];
        // ROI = 2x1 at (1,1): green values 100 and 150.
        frame[(1 * w + 1) * 3 + 1] = 100;
        frame[(1 * w + 2) * 3 + 1] = 150;
        let frames = FrameSequence::from_frames(w, h, 60.0, vec![frame]).unwrap();
        let roi = track_of(vec![RoiBox::new(1, 1, 2, 1)]);
        let (set, _) = extract_channel_traces(&frames, &roi).unwrap();
        assert_eq!(set.foreground[1].samples[0], 125.0);
    }

    #[test]
    fn full_frame_roi_has_no_background() {
        let frames = solid_frames(8, 8, 2, [1, 2, 3]);
        let roi = track_of(vec![RoiBox::new(0, 0, 8, 8); 2]);
        let (set, warnings) = extract_channel_traces(&frames, &roi).unwrap();
        assert!(set.background.is_none());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn normalize_two_points() {
        let t = ChannelTrace::new(vec![1.0, 3.0], 60.0, Channel::G, Region::Foreground);
        let n = normalize(&t).unwrap();
        assert_eq!(n.samples, vec![-1.0, 1.0]);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let t = ChannelTrace::new(vec![5.0; 10], 60.0, Channel::G, Region::Foreground);
        assert!(normalize(&t).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_statistics() {
        let samples: Vec<f64> = (0..500).map(|i| ((i * 2654435761u64 as usize) % 997) as f64).collect();
        let t = ChannelTrace::new(samples, 60.0, Channel::R, Region::Foreground);
        let n = normalize(&t).unwrap();
        assert_abs_diff_eq!(n.mean(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.std(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn normalize_too_short() {
        let t = ChannelTrace::new(vec![1.0], 60.0, Channel::G, Region::Foreground);
        assert!(matches!(normalize(&t), Err(Error::TooShort { .. })));
    }

    #[test]
    fn detrend_constant_is_zero() {
        let t = ChannelTrace::new(vec![7.5; 300], 60.0, Channel::G, Region::Foreground);
        let d = detrend(&t, 1.5).unwrap();
        assert!(d.samples.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn detrend_cancels_linear_ramp_in_interior() {
        let fs = 60.0;
        let samples: Vec<f64> = (0..600).map(|i| 3.0 + 0.25 * i as f64).collect();
        let t = ChannelTrace::new(samples, fs, Channel::G, Region::Foreground);
        let d = detrend(&t, 1.5).unwrap();
        let half = ((1.5 * fs).round() as usize) / 2;
        for i in half..600 - half {
            assert_abs_diff_eq!(d.samples[i], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn detrend_preserves_pulse_band_amplitude() {
        // 1.2 Hz sine at fs 60, window 1.5 s: amplitude within 15%.
        let fs = 60.0;
        let n = 3600;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 1.2 * i as f64 / fs).sin())
            .collect();
        let t = ChannelTrace::new(samples.clone(), fs, Channel::G, Region::Foreground);
        let d = detrend(&t, 1.5).unwrap();
        // Direct evaluation of the moving-average response at 1.2 Hz:
        // gain = 1 - sin(pi f w / fs) / (w sin(pi f / fs)) with odd w.
        let w = 2 * (((1.5 * fs).round() as usize) / 2) + 1;
        let arg = std::f64::consts::PI * 1.2 / fs;
        let expected = 1.0 - (arg * w as f64).sin() / (w as f64 * arg.sin());
        let amp = d.samples[n / 4..3 * n / 4]
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((amp - 1.0).abs() < 0.15, "amplitude {amp} drifted past 15%");
        assert_abs_diff_eq!(amp, expected.abs(), epsilon = 0.02);
    }

    #[test]
    fn detrend_window_too_small() {
        let t = ChannelTrace::new(vec![0.0; 100], 1.0, Channel::G, Region::Foreground);
        assert!(matches!(detrend(&t, 2.0), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn resample_identity_on_uniform_input() {
        let samples: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 4.0, i as f64)).collect();
        let r = resample_uniform(&samples, 4.0, Channel::G, Region::Foreground).unwrap();
        assert_eq!(r.len(), 10);
        for (i, v) in r.samples.iter().enumerate() {
            assert_abs_diff_eq!(*v, i as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn resample_linear_midpoint() {
        let r = resample_uniform(&[(0.0, 0.0), (1.0, 10.0)], 2.0, Channel::G, Region::Foreground)
            .unwrap();
        assert_eq!(r.samples, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn resample_never_extrapolates() {
        let samples = [(0.0, 0.0), (0.3, 1.0), (0.95, 2.0)];
        let r = resample_uniform(&samples, 3.0, Channel::G, Region::Foreground).unwrap();
        // Grid 0, 1/3, 2/3; the next point (1.0) passes t_end = 0.95.
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn resample_rejects_nonmonotone() {
        let samples = [(0.0, 0.0), (0.0, 1.0)];
        assert!(matches!(
            resample_uniform(&samples, 2.0, Channel::G, Region::Foreground),
            Err(Error::NonMonotoneTime { .. })
        ));
    }

    #[test]
    fn detrend_of_normalized_has_zero_mean() {
        let samples: Vec<f64> = (0..400)
            .map(|i| 40.0 + (i as f64 * 0.05).sin() * 3.0 + i as f64 * 0.01)
            .collect();
        let t = ChannelTrace::new(samples, 60.0, Channel::G, Region::Foreground);
        let d = detrend(&normalize(&t).unwrap(), 1.5).unwrap();
        assert_abs_diff_eq!(d.mean(), 0.0, epsilon = 1e-9);
    }
}
