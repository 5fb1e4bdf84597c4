//! Synthetic traces and frame sequences with known heart rate and scripted
//! illumination artifacts. These generators are the verification oracle for
//! the rest of the pipeline: the pulse phase is the integral of the
//! requested rate profile, so the spectral readout can be checked against
//! ground truth exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::track::{RoiSource, RoiTrack};
use crate::types::{Channel, ChannelTrace, ChannelTraceSet, FrameSequence, HrSeries, Region, RoiBox};

/// Mean channel intensities shared by foreground and background traces.
/// The values satisfy the skin-chroma rule so synthetic faces are
/// detectable.
pub const BASE_RGB: [f64; 3] = [150.0, 120.0, 100.0];

/// Base color of the scene around the rendered face. Deliberately fails
/// the skin rule (R < G) so the fallback detector isolates the face; the
/// background trace's variation is added on top of it.
pub const BG_FRAME_RGB: [f64; 3] = [90.0, 105.0, 120.0];

/// Default per-channel pulse amplitude; green carries twice the signal.
pub const DEFAULT_PULSE_AMPLITUDE: [f64; 3] = [1.0, 2.0, 1.0];

/// Default additive Gaussian noise, in intensity units.
pub const DEFAULT_NOISE_STD: f64 = 0.4;

/// Scripted illumination artifact kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    /// Additive step on foreground AND background.
    Flash,
    /// Slow half-sine bump, foreground only.
    ForegroundDrift,
    /// Constant offset, foreground only.
    SplitLighting,
}

/// One artifact active on `[start, end)` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactEvent {
    pub kind: ArtifactKind,
    pub start: f64,
    pub end: f64,
    pub magnitude: f64,
}

impl ArtifactEvent {
    fn foreground_term(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            return 0.0;
        }
        match self.kind {
            ArtifactKind::Flash | ArtifactKind::SplitLighting => self.magnitude,
            ArtifactKind::ForegroundDrift => {
                let phase = (t - self.start) / (self.end - self.start);
                self.magnitude * (std::f64::consts::PI * phase).sin()
            }
        }
    }

    fn background_term(&self, t: f64) -> f64 {
        match self.kind {
            ArtifactKind::Flash if t >= self.start && t < self.end => self.magnitude,
            _ => 0.0,
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub duration: f64,
    pub fs: f64,
    /// Piecewise-linear rate breakpoints `(time_s, bpm)`.
    pub hr_profile: Vec<(f64, f64)>,
    pub pulse_amplitude: [f64; 3],
    pub noise_std: f64,
    pub artifacts: Vec<ArtifactEvent>,
}

impl SynthSpec {
    /// Constant heart rate with library defaults.
    pub fn constant_hr(bpm: f64, duration: f64) -> SynthSpec {
        SynthSpec {
            duration,
            fs: 60.0,
            hr_profile: vec![(0.0, bpm)],
            pulse_amplitude: DEFAULT_PULSE_AMPLITUDE,
            noise_std: DEFAULT_NOISE_STD,
            artifacts: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSpec { msg });
        if !(self.duration > 0.0) {
            return invalid(format!("duration {} must be > 0", self.duration));
        }
        if !(self.fs > 0.0) {
            return invalid(format!("fs {} must be > 0", self.fs));
        }
        if self.hr_profile.is_empty() {
            return invalid("hr_profile must have at least one breakpoint".into());
        }
        for w in self.hr_profile.windows(2) {
            if w[1].0 <= w[0].0 {
                return invalid("hr_profile times must be strictly increasing".into());
            }
        }
        for &(_, bpm) in &self.hr_profile {
            if !(42.0..=240.0).contains(&bpm) {
                return invalid(format!("hr {bpm} outside [42, 240] bpm"));
            }
        }
        if self.noise_std < 0.0 {
            return invalid("noise_std must be >= 0".into());
        }
        for a in &self.artifacts {
            if !(0.0 <= a.start && a.start < a.end && a.end <= self.duration) {
                return invalid(format!(
                    "artifact interval [{}, {}] outside [0, {}]",
                    a.start, a.end, self.duration
                ));
            }
        }
        Ok(())
    }

    /// Instantaneous rate at `t`, clamped to the profile's span.
    pub fn hr_at(&self, t: f64) -> f64 {
        let p = &self.hr_profile;
        if t <= p[0].0 {
            return p[0].1;
        }
        if t >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let idx = p.partition_point(|&(ts, _)| ts <= t);
        let (t0, v0) = p[idx - 1];
        let (t1, v1) = p[idx];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Pulse phase on the sample grid: trapezoidal integral of `hr(t) / 60`.
fn pulse_phase(spec: &SynthSpec, n: usize) -> Vec<f64> {
    let dt = 1.0 / spec.fs;
    let mut phase = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev_f = spec.hr_at(0.0) / 60.0;
    phase.push(0.0);
    for i in 1..n {
        let f = spec.hr_at(i as f64 * dt) / 60.0;
        acc += std::f64::consts::PI * (prev_f + f) * dt; // 2*pi*(f0+f1)/2*dt
        phase.push(acc);
        prev_f = f;
    }
    phase
}

fn ground_truth(spec: &SynthSpec) -> HrSeries {
    let mut samples = Vec::new();
    let mut t = 0.0;
    while t <= spec.duration + 1e-9 {
        samples.push((t, spec.hr_at(t)));
        t += 1.0;
    }
    HrSeries::new(samples).expect("profile validated")
}

/// Generate foreground and background traces plus the ground-truth series
/// (the rate profile sampled every second). Deterministic for a given
/// `(spec, seed)`.
pub fn synth_traces(spec: &SynthSpec, seed: u64) -> Result<(ChannelTraceSet, HrSeries)> {
    spec.validate()?;
    let n = (spec.duration * spec.fs).round() as usize;
    let phase = pulse_phase(spec, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |std: f64, rng: &mut ChaCha8Rng| -> f64 {
        if std > 0.0 {
            std * normal.sample(rng)
        } else {
            0.0
        }
    };

    let mut fg = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut bg = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        let t = i as f64 / spec.fs;
        let pulse = phase[i].sin();
        let fg_art: f64 = spec.artifacts.iter().map(|a| a.foreground_term(t)).sum();
        let bg_art: f64 = spec.artifacts.iter().map(|a| a.background_term(t)).sum();
        for c in 0..3 {
            fg[c].push(
                BASE_RGB[c] + spec.pulse_amplitude[c] * pulse + fg_art + draw(spec.noise_std, &mut rng),
            );
        }
        for (c, bg_c) in bg.iter_mut().enumerate() {
            bg_c.push(BASE_RGB[c] + bg_art + draw(spec.noise_std, &mut rng));
        }
    }

    let [fg_r, fg_g, fg_b] = fg;
    let [bg_r, bg_g, bg_b] = bg;
    let set = ChannelTraceSet {
        foreground: [
            ChannelTrace::new(fg_r, spec.fs, Channel::R, Region::Foreground),
            ChannelTrace::new(fg_g, spec.fs, Channel::G, Region::Foreground),
            ChannelTrace::new(fg_b, spec.fs, Channel::B, Region::Foreground),
        ],
        background: Some([
            ChannelTrace::new(bg_r, spec.fs, Channel::R, Region::Background),
            ChannelTrace::new(bg_g, spec.fs, Channel::G, Region::Background),
            ChannelTrace::new(bg_b, spec.fs, Channel::B, Region::Background),
        ]),
        fs: spec.fs,
    };
    Ok((set, ground_truth(spec)))
}

/// Generate a frame sequence: a textured skin-colored rectangle covering
/// the central third follows the foreground trace, everything else follows
/// the background trace. The face may translate horizontally at
/// `move_px_per_s`; returned boxes are the true per-frame positions.
pub fn synth_frames(
    spec: &SynthSpec,
    width: usize,
    height: usize,
    move_px_per_s: f64,
    seed: u64,
) -> Result<(FrameSequence, HrSeries, RoiTrack)> {
    if width < 32 || height < 32 {
        return Err(Error::InvalidSpec {
            msg: format!("frame geometry {width}x{height} below the 32x32 minimum"),
        });
    }
    let (traces, gt) = synth_traces(spec, seed)?;
    let n = traces.len();
    let face_w = width / 3;
    let face_h = height / 3;
    let face_y = (height - face_h) / 2;
    let face_x0 = (width - face_w) / 2;

    // Static per-pixel textures, +-10 units: one in face-local coordinates
    // (moves with the face) and one in scene coordinates. Texture keeps the
    // 8-bit quantization dithered, so region means follow the traces.
    let mut tex_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7465_7874);
    let texture: Vec<f64> = (0..face_w * face_h)
        .map(|_| tex_rng.gen_range(-10.0..10.0))
        .collect();
    let scene_texture: Vec<f64> = (0..width * height)
        .map(|_| tex_rng.gen_range(-10.0..10.0))
        .collect();

    let bg_values = traces.background.as_ref().expect("generator always emits background");
    let mut frames = Vec::with_capacity(n);
    let mut boxes = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / spec.fs;
        let face_x = {
            let x = face_x0 as f64 + move_px_per_s * t;
            let max_x = (width - face_w) as f64;
            x.clamp(0.0, max_x).floor() as usize
        };
        boxes.push(RoiBox::new(face_x, face_y, face_w, face_h));

        let fg_rgb = [
            traces.foreground[0].samples[i],
            traces.foreground[1].samples[i],
            traces.foreground[2].samples[i],
        ];
        let bg_rgb = [
            bg_values[0].samples[i],
            bg_values[1].samples[i],
            bg_values[2].samples[i],
        ];
        let mut frame = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let in_face =
                    x >= face_x && x < face_x + face_w && y >= face_y && y < face_y + face_h;
                if in_face {
                    let tex = texture[(y - face_y) * face_w + (x - face_x)];
                    for c in 0..3 {
                        frame.push((fg_rgb[c] + tex).clamp(0.0, 255.0).round() as u8);
                    }
                } else {
                    let tex = scene_texture[y * width + x];
                    for c in 0..3 {
                        let v = BG_FRAME_RGB[c] + (bg_rgb[c] - BASE_RGB[c]) + tex;
                        frame.push(v.clamp(0.0, 255.0).round() as u8);
                    }
                }
            }
        }
        frames.push(frame);
    }

    let seq = FrameSequence::from_frames(width, height, spec.fs, frames)?;
    let offsets = boxes
        .iter()
        .map(|b| (b.x as f64 - face_x0 as f64, 0.0))
        .collect();
    let roi = RoiTrack {
        boxes,
        source: RoiSource::External,
        stabilized: false,
        offsets,
    };
    Ok((seq, gt, roi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::extract_channel_traces;
    use approx::assert_abs_diff_eq;

    fn clean_spec(bpm: f64, duration: f64) -> SynthSpec {
        SynthSpec {
            noise_std: 0.0,
            ..SynthSpec::constant_hr(bpm, duration)
        }
    }

    #[test]
    fn constant_rate_is_a_pure_sinusoid() {
        let spec = clean_spec(72.0, 10.0);
        let (set, gt) = synth_traces(&spec, 1).unwrap();
        let g = &set.foreground[1];
        for (i, &v) in g.samples.iter().enumerate() {
            let t = i as f64 / spec.fs;
            let expected =
                BASE_RGB[1] + 2.0 * (2.0 * std::f64::consts::PI * 1.2 * t).sin();
            assert_abs_diff_eq!(v, expected, epsilon = 1e-9);
        }
        assert!(gt.values().all(|hr| hr == 72.0));
    }

    #[test]
    fn flash_hits_foreground_and_background() {
        let mut spec = clean_spec(72.0, 20.0);
        spec.pulse_amplitude = [0.0; 3];
        spec.artifacts.push(ArtifactEvent {
            kind: ArtifactKind::Flash,
            start: 10.0,
            end: 11.0,
            magnitude: 50.0,
        });
        let (set, _) = synth_traces(&spec, 1).unwrap();
        let bg = set.background.as_ref().unwrap();
        let idx = |t: f64| (t * spec.fs) as usize;
        for c in 0..3 {
            assert_abs_diff_eq!(
                set.foreground[c].samples[idx(10.5)] - BASE_RGB[c],
                50.0,
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(bg[c].samples[idx(10.5)] - BASE_RGB[c], 50.0, epsilon = 1e-9);
            assert_abs_diff_eq!(set.foreground[c].samples[idx(9.0)], BASE_RGB[c], epsilon = 1e-9);
            assert_abs_diff_eq!(bg[c].samples[idx(12.0)], BASE_RGB[c], epsilon = 1e-9);
        }
    }

    #[test]
    fn split_lighting_offsets_foreground_only() {
        let mut spec = clean_spec(72.0, 20.0);
        spec.pulse_amplitude = [0.0; 3];
        spec.artifacts.push(ArtifactEvent {
            kind: ArtifactKind::SplitLighting,
            start: 0.0,
            end: 20.0,
            magnitude: 12.5,
        });
        let (set, _) = synth_traces(&spec, 1).unwrap();
        let bg = set.background.as_ref().unwrap();
        for c in 0..3 {
            for i in 0..set.len() {
                assert_abs_diff_eq!(
                    set.foreground[c].samples[i] - bg[c].samples[i],
                    12.5,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn ramp_profile_frequency_at_midpoint() {
        // 60 -> 120 bpm over 60 s: instantaneous frequency at t = 30 is
        // 1.5 Hz, measured by the spacing of upward zero crossings.
        let spec = SynthSpec {
            hr_profile: vec![(0.0, 60.0), (60.0, 120.0)],
            noise_std: 0.0,
            ..SynthSpec::constant_hr(60.0, 60.0)
        };
        let (set, _) = synth_traces(&spec, 1).unwrap();
        let g: Vec<f64> = set.foreground[1]
            .samples
            .iter()
            .map(|v| v - BASE_RGB[1])
            .collect();
        let fs = spec.fs;
        let mut crossings = Vec::new();
        for i in 1..g.len() {
            if g[i - 1] < 0.0 && g[i] >= 0.0 {
                // Linear sub-sample refinement of the crossing time.
                let frac = -g[i - 1] / (g[i] - g[i - 1]);
                crossings.push((i as f64 - 1.0 + frac) / fs);
            }
        }
        let mid = crossings
            .windows(2)
            .min_by(|a, b| {
                let da = (0.5 * (a[0] + a[1]) - 30.0).abs();
                let db = (0.5 * (b[0] + b[1]) - 30.0).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|w| 1.0 / (w[1] - w[0]))
            .unwrap();
        assert!((mid - 1.5).abs() < 0.01, "instantaneous frequency {mid}");
    }

    #[test]
    fn determinism() {
        let spec = SynthSpec::constant_hr(72.0, 5.0);
        let (a, _) = synth_traces(&spec, 42).unwrap();
        let (b, _) = synth_traces(&spec, 42).unwrap();
        for c in 0..3 {
            assert_eq!(a.foreground[c].samples, b.foreground[c].samples);
        }
        let (fa, _, ra) = synth_frames(&spec, 48, 48, 1.0, 42).unwrap();
        let (fb, _, rb) = synth_frames(&spec, 48, 48, 1.0, 42).unwrap();
        assert_eq!(fa.frames, fb.frames);
        assert_eq!(ra.boxes, rb.boxes);
    }

    #[test]
    fn split_difference_is_offset_plus_noise() {
        let mut spec = SynthSpec::constant_hr(72.0, 20.0);
        spec.pulse_amplitude = [0.0; 3];
        spec.noise_std = 0.3;
        spec.artifacts.push(ArtifactEvent {
            kind: ArtifactKind::SplitLighting,
            start: 0.0,
            end: 20.0,
            magnitude: 8.0,
        });
        let (set, _) = synth_traces(&spec, 7).unwrap();
        let bg = set.background.as_ref().unwrap();
        let diffs: Vec<f64> = set.foreground[1]
            .samples
            .iter()
            .zip(&bg[1].samples)
            .map(|(f, b)| f - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!((mean - 8.0).abs() < 0.1, "mean offset {mean}");
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
        // Two independent noise streams: variance ~ 2 * std^2.
        assert!((var - 2.0 * 0.09).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn frames_reproduce_foreground_traces() {
        let spec = clean_spec(72.0, 6.0);
        let (frames, _, roi) = synth_frames(&spec, 64, 64, 0.0, 3).unwrap();
        let (set, _) = extract_channel_traces(&frames, &roi).unwrap();
        let (oracle, _) = synth_traces(&spec, 3).unwrap();
        for c in 0..3 {
            for i in 0..set.len() {
                assert!(
                    (set.foreground[c].samples[i] - oracle.foreground[c].samples[i]).abs() < 0.5,
                    "channel {c} sample {i}: {} vs {}",
                    set.foreground[c].samples[i],
                    oracle.foreground[c].samples[i]
                );
            }
        }
    }

    #[test]
    fn frames_reproduce_background_variation() {
        let mut spec = clean_spec(72.0, 6.0);
        spec.artifacts.push(ArtifactEvent {
            kind: ArtifactKind::Flash,
            start: 2.0,
            end: 3.0,
            magnitude: 30.0,
        });
        let (frames, _, roi) = synth_frames(&spec, 64, 64, 0.0, 3).unwrap();
        let (set, _) = extract_channel_traces(&frames, &roi).unwrap();
        let bg = set.background.as_ref().expect("background region");
        let (oracle, _) = synth_traces(&spec, 3).unwrap();
        let obg = oracle.background.as_ref().unwrap();
        for c in 0..3 {
            let mean_e: f64 = bg[c].mean();
            let mean_o: f64 = obg[c].mean();
            for i in 0..set.len() {
                let got = bg[c].samples[i] - mean_e;
                let want = obg[c].samples[i] - mean_o;
                assert!(
                    (got - want).abs() < 0.5,
                    "bg channel {c} sample {i}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn skin_fallback_finds_the_face() {
        let spec = clean_spec(72.0, 1.0);
        let (frames, _, roi) = synth_frames(&spec, 64, 64, 0.0, 9).unwrap();
        let detected = crate::track::detect_skin_roi(frames.frame(0), 64, 64).unwrap();
        let truth = roi.boxes[0];
        // Expanded 5% per side, so allow a small margin around the truth.
        assert!(detected.x + 3 >= truth.x && detected.x <= truth.x + 3);
        assert!(detected.y + 3 >= truth.y && detected.y <= truth.y + 3);
        assert!((detected.w as i64 - truth.w as i64).abs() <= 4);
        assert!((detected.h as i64 - truth.h as i64).abs() <= 4);
    }

    #[test]
    fn translation_rate_arithmetic() {
        let spec = clean_spec(72.0, 2.0);
        let (_, _, roi) = synth_frames(&spec, 96, 96, 2.0, 3).unwrap();
        let x0 = roi.boxes[0].x;
        // 2 px/s at 60 fps: x advances 1 px every 30 frames.
        for (i, b) in roi.boxes.iter().enumerate() {
            assert_eq!(b.x, x0 + i / 30, "frame {i}");
        }
    }

    #[test]
    fn sliding_hr_on_clean_green_recovers_the_profile() {
        use crate::pulse::sliding_hr;
        use crate::types::BandLimits;
        let spec = clean_spec(90.0, 120.0);
        let (set, gt) = synth_traces(&spec, 6).unwrap();
        let hr = sliding_hr(&set.foreground[1], 30.0, 10.0, BandLimits::DEFAULT).unwrap();
        for (t, bpm) in &hr.samples {
            let truth = gt.interpolate(*t).unwrap();
            assert!((bpm - truth).abs() < 1.0, "estimate {bpm} vs {truth} at {t}");
        }
    }

    #[test]
    fn zero_amplitude_means_static_frames() {
        let mut spec = clean_spec(72.0, 2.0);
        spec.pulse_amplitude = [0.0; 3];
        let (frames, _, _) = synth_frames(&spec, 48, 48, 0.0, 5).unwrap();
        for f in &frames.frames {
            assert_eq!(f, &frames.frames[0]);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = SynthSpec::constant_hr(72.0, 10.0);
        s.hr_profile = vec![(0.0, 300.0)];
        assert!(matches!(synth_traces(&s, 1), Err(Error::InvalidSpec { .. })));
        let mut s = SynthSpec::constant_hr(72.0, 10.0);
        s.artifacts.push(ArtifactEvent {
            kind: ArtifactKind::Flash,
            start: 5.0,
            end: 50.0,
            magnitude: 1.0,
        });
        assert!(matches!(synth_traces(&s, 1), Err(Error::InvalidSpec { .. })));
        assert!(matches!(
            synth_frames(&SynthSpec::constant_hr(72.0, 1.0), 16, 64, 0.0, 1),
            Err(Error::InvalidSpec { .. })
        ));
    }
}
