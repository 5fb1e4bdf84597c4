//! Estimate-vs-ground-truth comparison: alignment by interpolation and the
//! four benchmark metrics (mean error, RMSE as bpm and as a percentage of
//! the mean true rate, fraction within 5 bpm, Pearson correlation).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::HrSeries;

/// Comparison report. `rmse` is in bpm; `rmse_pct` expresses the same RMSE
/// as a percentage of the mean true heart rate, so either reading of an
/// "RMSE (%)" column is available. `pearson_r` is absent when either side
/// is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_error: f64,
    pub mae: f64,
    pub rmse: f64,
    pub rmse_pct: f64,
    pub pct_within_5: f64,
    pub pearson_r: Option<f64>,
    pub n_samples: usize,
}

/// Interpolate ground truth at each estimate time; estimates outside the
/// ground-truth range are dropped.
pub fn align(est: &HrSeries, gt: &HrSeries) -> Result<Vec<(f64, f64)>> {
    let pairs: Vec<(f64, f64)> = est
        .samples
        .iter()
        .filter_map(|&(t, hr)| gt.interpolate(t).map(|truth| (hr, truth)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(pairs)
}

/// Metrics over `(estimate, truth)` pairs.
pub fn compute_metrics(pairs: &[(f64, f64)]) -> Result<EvalReport> {
    if pairs.len() < 2 {
        return Err(Error::TooFewPairs { got: pairs.len() });
    }
    for &(e, t) in pairs {
        if !e.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite {
                context: "compute_metrics".into(),
            });
        }
    }
    let n = pairs.len() as f64;
    let mean_error = pairs.iter().map(|(e, t)| e - t).sum::<f64>() / n;
    let mae = pairs.iter().map(|(e, t)| (e - t).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(e, t)| (e - t) * (e - t)).sum::<f64>() / n).sqrt();
    let mean_truth = pairs.iter().map(|(_, t)| t).sum::<f64>() / n;
    let rmse_pct = 100.0 * rmse / mean_truth;
    let within = pairs.iter().filter(|(e, t)| (e - t).abs() < 5.0).count();
    let pct_within_5 = 100.0 * within as f64 / n;

    let mean_est = pairs.iter().map(|(e, _)| e).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_e = 0.0;
    let mut var_t = 0.0;
    for &(e, t) in pairs {
        cov += (e - mean_est) * (t - mean_truth);
        var_e += (e - mean_est) * (e - mean_est);
        var_t += (t - mean_truth) * (t - mean_truth);
    }
    let pearson_r = if var_e > 0.0 && var_t > 0.0 {
        Some((cov / (var_e * var_t).sqrt()).clamp(-1.0, 1.0))
    } else {
        None
    };

    Ok(EvalReport {
        mean_error,
        mae,
        rmse,
        rmse_pct,
        pct_within_5,
        pearson_r,
        n_samples: pairs.len(),
    })
}

/// Round to 6 significant digits; the shortest decimal representation of
/// the result round-trips exactly.
fn round_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let magnitude = x.abs().log10().floor();
    let scale = 10f64.powf(5.0 - magnitude);
    (x * scale).round() / scale
}

#[derive(Serialize)]
struct ReportJson {
    mean_error: f64,
    mae: f64,
    rmse: f64,
    rmse_pct: f64,
    pct_within_5: f64,
    pearson_r: Option<f64>,
    n_samples: usize,
}

/// Serialize with a stable key order and reals rounded to 6 significant
/// digits. An absent `pearson_r` is emitted as `null`.
pub fn report_to_json(report: &EvalReport) -> String {
    let shadow = ReportJson {
        mean_error: round_sig(report.mean_error),
        mae: round_sig(report.mae),
        rmse: round_sig(report.rmse),
        rmse_pct: round_sig(report.rmse_pct),
        pct_within_5: round_sig(report.pct_within_5),
        pearson_r: report.pearson_r.map(round_sig),
        n_samples: report.n_samples,
    };
    serde_json::to_string_pretty(&shadow).expect("report serialization")
}
