//! Butterworth bandpass design and forward-backward (zero phase) filtering.
//!
//! The design path mirrors the textbook analog-prototype route: Butterworth
//! lowpass poles, lowpass-to-bandpass transform with pre-warped corner
//! frequencies, bilinear transform, then grouping into biquad sections.
//! Each section carries the numerator `(z-1)(z+1)`, i.e. one zero at DC and
//! one at Nyquist.

use rustfft::num_complex::Complex64;

use crate::error::Result;
use crate::types::{BandLimits, ChannelTrace};

/// Bandpass order (pole count). Two biquad sections.
pub const BANDPASS_POLES: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Steady-state direct-form-II-transposed state for a unit step input,
    /// so constant signals produce no startup transient.
    fn step_state(&self) -> [f64; 2] {
        let h = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        [h - self.b[0], self.b[2] - self.a[1] * h]
    }

    fn run(&self, x: &mut [f64], scale_first: f64) {
        let zi = self.step_state();
        let mut s1 = zi[0] * scale_first;
        let mut s2 = zi[1] * scale_first;
        for v in x.iter_mut() {
            let xin = *v;
            let y = self.b[0] * xin + s1;
            s1 = self.b[1] * xin - self.a[0] * y + s2;
            s2 = self.b[2] * xin - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, z: Complex64) -> Complex64 {
        let num = self.b[0] * z * z + self.b[1] * z + self.b[2];
        let den = z * z + self.a[0] * z + self.a[1];
        num / den
    }
}

/// Cascaded-biquad bandpass filter.
#[derive(Debug, Clone)]
pub struct BandpassFilter {
    sections: Vec<Biquad>,
    gain: f64,
    fs: f64,
}

impl BandpassFilter {
    /// Design a Butterworth bandpass with `poles` poles (must be even).
    pub fn design(band: BandLimits, fs: f64, poles: usize) -> Result<BandpassFilter> {
        band.validate(fs)?;
        assert!(poles >= 2 && poles % 2 == 0, "pole count must be even");
        let n = poles / 2;

        // Pre-warped corner frequencies and bandpass transform constants.
        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let wl = warp(band.low);
        let wh = warp(band.high);
        let bw = wh - wl;
        let w0sq = wl * wh;

        // Butterworth prototype poles on the left-half unit circle.
        let mut poles_bp: Vec<Complex64> = Vec::with_capacity(poles);
        for k in 0..n {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n as f64 + 1.0) / (2.0 * n as f64);
            let p = Complex64::new(theta.cos(), theta.sin());
            // Lowpass -> bandpass: p -> p*bw/2 +- sqrt((p*bw/2)^2 - w0^2).
            let s = p * (bw / 2.0);
            let root = (s * s - w0sq).sqrt();
            poles_bp.push(s + root);
            poles_bp.push(s - root);
        }

        // Bilinear transform of the poles; zeros land on z = 1 and z = -1.
        let fs2 = 2.0 * fs;
        let poles_z: Vec<Complex64> = poles_bp
            .iter()
            .map(|&s| (fs2 + s) / (fs2 - s))
            .collect();

        let mut sections = pair_into_biquads(&poles_z);
        debug_assert_eq!(sections.len(), n);
        for s in &mut sections {
            s.b = [1.0, 0.0, -1.0];
        }

        // Normalize so the magnitude at the (warped) center frequency is 1.
        let wc_digital = 2.0 * (w0sq.sqrt() / fs2).atan();
        let z = Complex64::new(wc_digital.cos(), wc_digital.sin());
        let mut h = Complex64::new(1.0, 0.0);
        for s in &sections {
            h *= s.response(z);
        }
        let gain = 1.0 / h.norm();

        Ok(BandpassFilter {
            sections,
            gain,
            fs,
        })
    }

    /// Single forward pass (transient included). Exposed for tests.
    fn filter_forward(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        let mut first = x[0] * self.gain;
        for v in x.iter_mut() {
            *v *= self.gain;
        }
        for s in &self.sections {
            s.run(x, first);
            // DC gain of a bandpass section is 0, so the signal entering the
            // next section starts from 0 steady state.
            first *= (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]);
        }
    }

    /// Zero-phase filtering: odd-reflection padding, forward pass, then a
    /// time-reversed pass.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = ((3.0 * self.fs).round() as usize).max(12).min(x.len() - 1);
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }

        self.filter_forward(&mut ext);
        ext.reverse();
        self.filter_forward(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Squared magnitude response at `f` Hz (what filtfilt applies).
    pub fn zero_phase_gain(&self, f: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / self.fs;
        let z = Complex64::new(w.cos(), w.sin());
        let mut h = Complex64::new(self.gain, 0.0);
        for s in &self.sections {
            h *= s.response(z);
        }
        h.norm_sqr()
    }
}

/// Group conjugate pole pairs (or leftover real poles two at a time) into
/// denominator biquads.
fn pair_into_biquads(poles: &[Complex64]) -> Vec<Biquad> {
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    complex.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    real.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut sections = Vec::new();
    for p in complex {
        sections.push(Biquad {
            b: [1.0, 0.0, 0.0],
            a: [-2.0 * p.re, p.norm_sqr()],
        });
    }
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, 0.0],
            a: [-(p1 + p2), p1 * p2],
        });
    }
    sections
}

/// 4-pole Butterworth bandpass applied forward and backward (zero phase).
pub fn bandpass(trace: &ChannelTrace, band: BandLimits) -> Result<ChannelTrace> {
    let filter = BandpassFilter::design(band, trace.fs, BANDPASS_POLES)?;
    let samples = filter.filtfilt(&trace.samples);
    Ok(ChannelTrace::new(samples, trace.fs, trace.channel, trace.region))
}
