//! Pulse extraction: ICA source separation, pulse-component selection,
//! bandpass conditioning and sliding-window spectral heart-rate estimation.

pub mod filter;
pub mod ica;
pub mod spectrum;

pub use filter::{bandpass, BandpassFilter, BANDPASS_POLES};
pub use ica::{fastica3, IcaParams, IcaResult};
pub use spectrum::{
    power_spectrum, power_spectrum_samples, spectrum_peak_hr, DEFAULT_MIN_RESOLUTION_HZ,
};

use crate::error::{Error, Result};
use crate::types::{BandLimits, Channel, ChannelTrace, HrSeries, Region};

/// Default sliding window length in seconds.
pub const DEFAULT_WINDOW_S: f64 = 30.0;

/// Default reporting cadence in seconds.
pub const DEFAULT_STEP_S: f64 = 10.0;

/// Pick the component whose spectrum is most concentrated in the band:
/// argmax of (highest in-band bin power) / (total in-band power). Ties go
/// to the lowest index.
pub fn select_pulse_component(result: &IcaResult, fs: f64, band: BandLimits) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, component) in result.components.iter().enumerate() {
        let periodicity = match power_spectrum_samples(component, fs, DEFAULT_MIN_RESOLUTION_HZ) {
            Ok(spec) => {
                let in_band: Vec<f64> = spec
                    .freqs
                    .iter()
                    .zip(&spec.power)
                    .filter(|(f, _)| **f >= band.low && **f <= band.high)
                    .map(|(_, p)| *p)
                    .collect();
                let total: f64 = in_band.iter().sum();
                let peak = in_band.iter().fold(0.0f64, |m, &v| m.max(v));
                if total > 0.0 {
                    peak / total
                } else {
                    0.0
                }
            }
            Err(_) => 0.0,
        };
        if periodicity > best.1 {
            best = (i, periodicity);
        }
    }
    best.0
}

/// Heart rate over a sliding window: each window is bandpassed, Welch
/// transformed and read out at the spectral peak. Sample times are window
/// centers.
pub fn sliding_hr(
    trace: &ChannelTrace,
    window_s: f64,
    step_s: f64,
    band: BandLimits,
) -> Result<HrSeries> {
    let window_n = (window_s * trace.fs).round() as usize;
    let step_n = ((step_s * trace.fs).round() as usize).max(1);
    if trace.len() < window_n || window_n == 0 {
        return Err(Error::TraceTooShort {
            needed: window_n,
            got: trace.len(),
        });
    }
    let filter = BandpassFilter::design(band, trace.fs, BANDPASS_POLES)?;

    let mut samples = Vec::new();
    let mut start = 0usize;
    while start + window_n <= trace.len() {
        let windowed = filter.filtfilt(&trace.samples[start..start + window_n]);
        let spec = power_spectrum_samples(&windowed, trace.fs, DEFAULT_MIN_RESOLUTION_HZ)?;
        let hr = spectrum_peak_hr(&spec, band)?;
        let t = (start as f64 + window_n as f64 / 2.0) / trace.fs;
        samples.push((t, hr));
        start += step_n;
    }
    HrSeries::new(samples)
}

/// Wrap a separated component as a trace so it can flow through the same
/// downstream operations; the green label matches the channel the pulse
/// defaults to when ICA is unavailable.
pub fn component_trace(result: &IcaResult, index: usize, fs: f64) -> ChannelTrace {
    ChannelTrace::new(
        result.components[index].clone(),
        fs,
        Channel::G,
        Region::Foreground,
    )
}
