//! End-to-end estimation: ROI -> stabilize -> extract -> condition ->
//! rectify -> ICA -> sliding-window spectral readout, with a machine-
//! readable log of every stage's parameters and warnings.

use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{align, compute_metrics, EvalReport};
use crate::ingest;
use crate::pulse::{self, IcaParams};
use crate::rectify::{rectify_set, NlmsParams};
use crate::trace::{detrend, extract_channel_traces, normalize, DEFAULT_DETREND_WINDOW_S};
use crate::track::{detect_skin_roi, stabilize_roi, RoiSource};
use crate::types::{BandLimits, Channel, ChannelTrace, ChannelTraceSet, FrameSequence, HrSeries, RoiBox};

/// Where the per-frame ROI comes from when estimating from frames.
#[derive(Debug, Clone)]
pub enum RoiInput {
    /// Boxes loaded from an external detector's file.
    External(Vec<RoiBox>),
    /// Built-in skin-chroma detector.
    SkinFallback,
}

/// Full pipeline configuration; defaults mirror the library constants.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub rectify_enabled: bool,
    pub nlms: NlmsParams,
    pub band: BandLimits,
    pub window_s: f64,
    pub step_s: f64,
    pub ica_enabled: bool,
    pub ica: IcaParams,
    pub detrend_window_s: f64,
    pub fs_override: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rectify_enabled: true,
            nlms: NlmsParams::default(),
            band: BandLimits::DEFAULT,
            window_s: pulse::DEFAULT_WINDOW_S,
            step_s: pulse::DEFAULT_STEP_S,
            ica_enabled: true,
            ica: IcaParams::default(),
            detrend_window_s: DEFAULT_DETREND_WINDOW_S,
            fs_override: None,
        }
    }
}

/// One stage's parameters and warnings.
#[derive(Debug, Clone, Serialize)]
pub struct StageLog {
    pub stage: String,
    pub params: serde_json::Value,
    pub warnings: Vec<String>,
}

/// Machine-readable run record: full configuration plus per-stage entries.
#[derive(Debug, Clone, Serialize, Default)]
pub struct RunLog {
    pub config: serde_json::Value,
    pub stages: Vec<StageLog>,
}

impl RunLog {
    fn push(&mut self, stage: &str, params: serde_json::Value, warnings: Vec<String>) {
        self.stages.push(StageLog {
            stage: stage.to_string(),
            params,
            warnings,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serialization")
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.stages
            .iter()
            .flat_map(|s| s.warnings.iter().map(String::as_str))
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Estimate heart rate from decoded frames.
pub fn run_estimate_frames(
    frames: &FrameSequence,
    roi: RoiInput,
    config: &PipelineConfig,
) -> Result<(HrSeries, RunLog)> {
    let mut log = RunLog {
        config: serde_json::to_value(config).expect("config serialization"),
        stages: Vec::new(),
    };

    let mut frames_view = frames.clone();
    if let Some(fs) = config.fs_override {
        frames_view.fps = fs;
        frames_view.timestamps = (0..frames_view.len()).map(|i| i as f64 / fs).collect();
    }

    let (boxes, source) = match roi {
        RoiInput::External(boxes) => {
            if boxes.len() != frames_view.len() {
                return Err(Error::LengthMismatch {
                    expected: frames_view.len(),
                    actual: boxes.len(),
                }
                .in_stage("roi"));
            }
            log.push("roi", json!({ "source": "external", "boxes": boxes.len() }), vec![]);
            (boxes, RoiSource::External)
        }
        RoiInput::SkinFallback => {
            let mut boxes = Vec::with_capacity(frames_view.len());
            for i in 0..frames_view.len() {
                let b = stage(
                    "roi",
                    detect_skin_roi(frames_view.frame(i), frames_view.width, frames_view.height),
                )?;
                boxes.push(b);
            }
            log.push(
                "roi",
                json!({ "source": "skin_fallback", "boxes": boxes.len() }),
                vec![],
            );
            (boxes, RoiSource::SkinFallback)
        }
    };

    let track = stage("stabilize", stabilize_roi(&boxes, &frames_view, source))?;
    let stabilize_warnings = if track.stabilized {
        vec![]
    } else {
        vec!["tracking collapsed; using input boxes unstabilized".to_string()]
    };
    log.push(
        "stabilize",
        json!({ "stabilized": track.stabilized }),
        stabilize_warnings,
    );

    let (set, extract_warnings) = stage("extract", extract_channel_traces(&frames_view, &track))?;
    log.push(
        "extract",
        json!({ "fs": set.fs, "samples": set.len(), "background": set.background.is_some() }),
        extract_warnings,
    );

    let hr = estimate_from_set(&set, config, &mut log)?;
    Ok((hr, log))
}

/// Estimate heart rate from pre-extracted traces.
pub fn run_estimate_traces(
    set: &ChannelTraceSet,
    config: &PipelineConfig,
) -> Result<(HrSeries, RunLog)> {
    let mut log = RunLog {
        config: serde_json::to_value(config).expect("config serialization"),
        stages: Vec::new(),
    };
    let mut set_view = set.clone();
    if let Some(fs) = config.fs_override {
        set_view.fs = fs;
        for t in set_view.foreground.iter_mut() {
            t.fs = fs;
        }
        if let Some(bg) = set_view.background.as_mut() {
            for t in bg.iter_mut() {
                t.fs = fs;
            }
        }
    }
    let hr = estimate_from_set(&set_view, config, &mut log)?;
    Ok((hr, log))
}

fn condition(trace: &ChannelTrace, window_s: f64) -> Result<ChannelTrace> {
    detrend(&normalize(trace)?, window_s)
}

fn estimate_from_set(
    set: &ChannelTraceSet,
    config: &PipelineConfig,
    log: &mut RunLog,
) -> Result<HrSeries> {
    // Normalize + detrend every trace.
    let mut conditioned = set.clone();
    for t in conditioned.foreground.iter_mut() {
        *t = stage("condition", condition(t, config.detrend_window_s))?;
    }
    if let Some(bg) = conditioned.background.as_mut() {
        for t in bg.iter_mut() {
            *t = stage("condition", condition(t, config.detrend_window_s))?;
        }
    }
    log.push(
        "condition",
        json!({ "detrend_window_s": config.detrend_window_s }),
        vec![],
    );

    // NLMS rectification against the background reference.
    let rectified = if config.rectify_enabled {
        let (out, warnings) = stage("rectify", rectify_set(&conditioned, &config.nlms))?;
        log.push(
            "rectify",
            json!({
                "order": config.nlms.order,
                "mu": config.nlms.mu,
                "eps": config.nlms.eps,
                "applied": out.background.is_some(),
            }),
            warnings,
        );
        out
    } else {
        log.push("rectify", json!({ "applied": false, "disabled": true }), vec![]);
        conditioned
    };

    // Source separation, falling back to the green channel.
    let selected = if config.ica_enabled {
        let inputs = [
            &rectified.foreground[0],
            &rectified.foreground[1],
            &rectified.foreground[2],
        ];
        match pulse::fastica3(inputs, &config.ica) {
            Ok(result) => {
                let index = pulse::select_pulse_component(&result, rectified.fs, config.band);
                log.push(
                    "ica",
                    json!({
                        "seed": config.ica.seed,
                        "iterations": result.iterations,
                        "converged": result.converged,
                        "selected_component": index,
                    }),
                    vec![],
                );
                pulse::component_trace(&result, index, rectified.fs)
            }
            Err(e @ Error::SingularCovariance) => {
                log.push(
                    "ica",
                    json!({ "fallback": "green" }),
                    vec![format!("ica failed ({e}); falling back to green channel")],
                );
                rectified.foreground_channel(Channel::G).clone()
            }
            Err(e) => return Err(e.in_stage("ica")),
        }
    } else {
        log.push("ica", json!({ "disabled": true, "fallback": "green" }), vec![]);
        rectified.foreground_channel(Channel::G).clone()
    };

    let hr = stage(
        "hr",
        pulse::sliding_hr(&selected, config.window_s, config.step_s, config.band),
    )?;
    log.push(
        "hr",
        json!({
            "window_s": config.window_s,
            "step_s": config.step_s,
            "band_low_hz": config.band.low,
            "band_high_hz": config.band.high,
            "estimates": hr.len(),
        }),
        vec![],
    );
    Ok(hr)
}

/// Load estimate and ground-truth files, align and compute metrics.
pub fn run_evaluate(est_path: &Path, gt_path: &Path) -> Result<EvalReport> {
    let est = ingest::load_ground_truth(est_path)?;
    let gt = ingest::load_ground_truth(gt_path)?;
    let pairs = align(&est, &gt)?;
    compute_metrics(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_traces, SynthSpec};

    #[test]
    fn clean_trace_pipeline_tracks_truth() {
        let spec = SynthSpec::constant_hr(72.0, 120.0);
        let (set, gt) = synth_traces(&spec, 11).unwrap();
        let (hr, log) = run_estimate_traces(&set, &PipelineConfig::default()).unwrap();
        assert_eq!(hr.len(), 10);
        for (t, bpm) in &hr.samples {
            let truth = gt.interpolate(*t).unwrap();
            assert!((bpm - truth).abs() < 1.0, "estimate {bpm} vs {truth} at {t}");
        }
        // Full config disclosure in the log.
        assert!(log.config.get("window_s").is_some());
        assert!(log.config.get("nlms").is_some());
        assert!(log.stages.iter().any(|s| s.stage == "ica"));
    }

    #[test]
    fn no_background_pipeline_warns_and_runs() {
        let spec = SynthSpec::constant_hr(72.0, 60.0);
        let (mut set, _) = synth_traces(&spec, 11).unwrap();
        set.background = None;
        let (hr, log) = run_estimate_traces(&set, &PipelineConfig::default()).unwrap();
        assert_eq!(hr.len(), 4);
        assert!(log.warnings().any(|w| w.contains("rectification skipped")));
    }

    #[test]
    fn no_rectify_no_ica_reduces_to_green_readout() {
        let spec = SynthSpec::constant_hr(66.0, 60.0);
        let (set, _) = synth_traces(&spec, 4).unwrap();
        let config = PipelineConfig {
            rectify_enabled: false,
            ica_enabled: false,
            ..PipelineConfig::default()
        };
        let (hr, log) = run_estimate_traces(&set, &config).unwrap();
        for (_, bpm) in &hr.samples {
            assert!((bpm - 66.0).abs() < 1.0);
        }
        assert!(log
            .stages
            .iter()
            .any(|s| s.stage == "ica" && s.params["disabled"] == json!(true)));
    }

    #[test]
    fn stage_errors_carry_the_stage_name() {
        let spec = SynthSpec::constant_hr(72.0, 10.0);
        let (set, _) = synth_traces(&spec, 1).unwrap();
        // 10 s of data cannot fill a 30 s window.
        let err = run_estimate_traces(&set, &PipelineConfig::default()).unwrap_err();
        match err {
            Error::Stage { stage, source } => {
                assert_eq!(stage, "hr");
                assert!(matches!(*source, Error::TraceTooShort { .. }));
            }
            other => panic!("expected staged error, got {other:?}"),
        }
    }

    #[test]
    fn skinless_frames_fail_at_the_roi_stage() {
        use crate::types::FrameSequence;
        let frame: Vec<u8> = (0..16 * 16).flat_map(|_| [0u8, 0, 255]).collect();
        let frames = FrameSequence::from_frames(16, 16, 30.0, vec![frame; 3]).unwrap();
        let err = run_estimate_frames(&frames, RoiInput::SkinFallback, &PipelineConfig::default())
            .unwrap_err();
        match err {
            Error::Stage { stage, source } => {
                assert_eq!(stage, "roi");
                assert!(matches!(*source, Error::NoSkinPixels));
            }
            other => panic!("expected roi stage error, got {other:?}"),
        }
    }

    #[test]
    fn identical_channels_fall_back_to_green() {
        let spec = SynthSpec {
            pulse_amplitude: [2.0, 2.0, 2.0],
            noise_std: 0.0,
            ..SynthSpec::constant_hr(72.0, 60.0)
        };
        // All three channels identical -> singular covariance in ICA.
        let (set, _) = synth_traces(&spec, 1).unwrap();
        let config = PipelineConfig {
            rectify_enabled: false,
            ..PipelineConfig::default()
        };
        let (hr, log) = run_estimate_traces(&set, &config).unwrap();
        assert!(log.warnings().any(|w| w.contains("falling back to green")));
        for (_, bpm) in &hr.samples {
            assert!((bpm - 72.0).abs() < 1.0);
        }
    }
}
