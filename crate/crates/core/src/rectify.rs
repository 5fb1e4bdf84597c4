//! Illumination rectification: cancel the illumination component of the
//! foreground trace using the background trace as a noise reference, via a
//! normalized least-mean-squares adaptive FIR filter.
//!
//! At each step the filter predicts the illumination contribution
//! `y_t = w . x_t` from the last `L` reference samples, and the residual
//! `e_t = d_t - y_t` is the rectified ("pure") signal. The weight update
//! `w += mu * e_t * x_t / (eps + |x_t|^2)` is normalized by the reference
//! energy inside the window, so convergence is insensitive to reference
//! scale. Outputs are computed with the pre-update weights, which makes the
//! decomposition `pure + noise_estimate = primary` hold exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{ChannelTrace, ChannelTraceSet};

/// NLMS filter parameters and (after a run) the final weights.
#[derive(Debug, Clone, Serialize)]
pub struct RectificationModel {
    /// Tap count `L`.
    pub order: usize,
    /// Step size in `(0, 2]`.
    pub mu: f64,
    /// Regularizer added to the reference energy.
    pub eps: f64,
    /// Adaptive weights, one per tap.
    pub weights: Vec<f64>,
}

/// Parameters for [`nlms_rectify`], with the library defaults.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NlmsParams {
    pub order: usize,
    pub mu: f64,
    pub eps: f64,
}

impl Default for NlmsParams {
    fn default() -> Self {
        NlmsParams {
            order: 8,
            mu: 0.5,
            eps: 1e-6,
        }
    }
}

impl NlmsParams {
    fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidSpec {
                msg: "nlms order must be >= 1".into(),
            });
        }
        if !(self.mu > 0.0 && self.mu <= 2.0) {
            return Err(Error::InvalidSpec {
                msg: format!("nlms mu {} outside (0, 2]", self.mu),
            });
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidSpec {
                msg: format!("nlms eps {} must be > 0", self.eps),
            });
        }
        Ok(())
    }
}

/// Result of rectifying one trace. The decomposition is exact by
/// construction: `pure[t]` is bit-for-bit the floating-point difference
/// `primary[t] - noise_estimate[t]`.
#[derive(Debug, Clone)]
pub struct RectifiedTrace {
    pub pure: ChannelTrace,
    pub noise_estimate: ChannelTrace,
    pub model: RectificationModel,
}

/// Run the NLMS recursion of `primary` against `reference`.
///
/// The reference window is zero-padded before t = 0; weights start at zero.
pub fn nlms_rectify(
    primary: &ChannelTrace,
    reference: &ChannelTrace,
    params: &NlmsParams,
) -> Result<RectifiedTrace> {
    params.validate()?;
    if primary.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: primary.len(),
            actual: reference.len(),
        });
    }
    if primary.fs != reference.fs {
        return Err(Error::FsMismatch {
            a: primary.fs,
            b: reference.fs,
        });
    }
    if primary.len() < params.order {
        return Err(Error::TooShort {
            context: "nlms_rectify".into(),
            needed: params.order,
            got: primary.len(),
        });
    }
    primary.ensure_finite("nlms primary")?;
    reference.ensure_finite("nlms reference")?;

    let l = params.order;
    let n = primary.len();
    let mut weights = vec![0.0f64; l];
    let mut pure = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);

    for t in 0..n {
        // x_t = [reference[t], ..., reference[t-L+1]], zero-padded.
        let mut y = 0.0;
        let mut energy = 0.0;
        for k in 0..l.min(t + 1) {
            let x = reference.samples[t - k];
            y += weights[k] * x;
            energy += x * x;
        }
        let e = primary.samples[t] - y;
        noise.push(y);
        pure.push(e);
        let gain = params.mu * e / (params.eps + energy);
        for k in 0..l.min(t + 1) {
            weights[k] += gain * reference.samples[t - k];
        }
    }

    let model = RectificationModel {
        order: l,
        mu: params.mu,
        eps: params.eps,
        weights,
    };
    Ok(RectifiedTrace {
        pure: ChannelTrace::new(pure, primary.fs, primary.channel, primary.region),
        noise_estimate: ChannelTrace::new(noise, primary.fs, primary.channel, primary.region),
        model,
    })
}

/// Rectify each foreground channel against the same-channel background
/// trace. Without background traces the input is passed through unchanged
/// and a warning is recorded.
pub fn rectify_set(
    traces: &ChannelTraceSet,
    params: &NlmsParams,
) -> Result<(ChannelTraceSet, Vec<String>)> {
    let Some(background) = &traces.background else {
        return Ok((
            traces.clone(),
            vec!["no background traces; rectification skipped".to_string()],
        ));
    };
    let mut rectified = Vec::with_capacity(3);
    for (fg, bg) in traces.foreground.iter().zip(background.iter()) {
        let r = nlms_rectify(fg, bg, params)?;
        rectified.push(r.pure);
    }
    let mut it = rectified.into_iter();
    let foreground = [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ];
    Ok((
        ChannelTraceSet {
            foreground,
            background: traces.background.clone(),
            fs: traces.fs,
        },
        Vec::new(),
    ))
}
