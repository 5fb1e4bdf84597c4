//! Welch power spectral density and spectral peak heart-rate readout.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::types::{BandLimits, ChannelTrace, Spectrum};

/// Default bin spacing ceiling for the zero-padded FFT, in Hz.
pub const DEFAULT_MIN_RESOLUTION_HZ: f64 = 0.01;

/// Welch segment length cap, in seconds.
const MAX_SEGMENT_S: f64 = 20.0;

/// Welch estimate: Hann-windowed segments of length `min(n, 20 s)` with 50%
/// overlap, each zero-padded to the smallest power of two whose bin spacing
/// is at most `min_resolution_hz`, periodograms averaged.
pub fn power_spectrum_samples(
    samples: &[f64],
    fs: f64,
    min_resolution_hz: f64,
) -> Result<Spectrum> {
    let n = samples.len();
    if n < 64 {
        return Err(Error::TooShort {
            context: "power_spectrum".into(),
            needed: 64,
            got: n,
        });
    }
    let seg_len = n.min((MAX_SEGMENT_S * fs).round() as usize).max(2);
    let min_bins = (fs / min_resolution_hz).ceil() as usize;
    let nfft = seg_len.max(min_bins).next_power_of_two();

    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / seg_len as f64).cos()))
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);

    let n_bins = nfft / 2 + 1;
    let mut power = vec![0.0f64; n_bins];
    let step = (seg_len / 2).max(1);
    let mut n_segments = 0usize;
    let mut start = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    while start + seg_len <= n {
        for v in buf.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for i in 0..seg_len {
            buf[i] = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
        n_segments += 1;
        start += step;
    }

    // One-sided density scaling; interior bins carry both halves.
    let scale = 1.0 / (fs * window_power * n_segments as f64);
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || k == n_bins - 1 { 1.0 } else { 2.0 };
        *p *= scale * one_sided;
    }

    let df = fs / nfft as f64;
    let freqs = (0..n_bins).map(|k| k as f64 * df).collect();
    Ok(Spectrum { freqs, power })
}

/// [`power_spectrum_samples`] over a trace.
pub fn power_spectrum(trace: &ChannelTrace, min_resolution_hz: f64) -> Result<Spectrum> {
    power_spectrum_samples(&trace.samples, trace.fs, min_resolution_hz)
}

/// In-band spectral peak refined by 3-point parabolic interpolation on
/// log power, returned in beats per minute.
pub fn spectrum_peak_hr(spectrum: &Spectrum, band: BandLimits) -> Result<f64> {
    let df = spectrum.df();
    let in_band: Vec<usize> = (0..spectrum.freqs.len())
        .filter(|&k| spectrum.freqs[k] >= band.low && spectrum.freqs[k] <= band.high)
        .collect();
    if in_band.is_empty() {
        return Err(Error::EmptyBand);
    }
    let peak = *in_band
        .iter()
        .max_by(|&&a, &&b| {
            spectrum.power[a]
                .partial_cmp(&spectrum.power[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap();
    if spectrum.power[peak] <= 0.0 {
        return Err(Error::ZeroPower);
    }

    let mut f_star = spectrum.freqs[peak];
    if peak > 0 && peak + 1 < spectrum.power.len() {
        let (l, c, r) = (
            spectrum.power[peak - 1],
            spectrum.power[peak],
            spectrum.power[peak + 1],
        );
        if l > 0.0 && r > 0.0 {
            let (ll, lc, lr) = (l.ln(), c.ln(), r.ln());
            let denom = ll - 2.0 * lc + lr;
            if denom < 0.0 {
                let delta = (0.5 * (ll - lr) / denom).clamp(-0.5, 0.5);
                f_star += delta * df;
            }
        }
    }
    Ok(60.0 * f_star.clamp(band.low, band.high))
}
