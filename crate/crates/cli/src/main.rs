//! `rppg` command line: synthesize test data, estimate heart rate from
//! frame sequences or pixel traces, dump per-channel spectra and evaluate
//! estimates against ground truth.
//!
//! Exit codes: 0 success, 1 pipeline error, 2 evaluation overlap error,
//! 64 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use rppg_core::error::Error as CoreError;
use rppg_core::pipeline::{run_estimate_frames, run_estimate_traces, PipelineConfig, RoiInput};
use rppg_core::pulse::{power_spectrum, IcaParams};
use rppg_core::rectify::NlmsParams;
use rppg_core::synth::{synth_frames, synth_traces, ArtifactEvent, ArtifactKind, SynthSpec};
use rppg_core::trace::{detrend, normalize};
use rppg_core::types::BandLimits;
use rppg_core::{eval, ingest};

#[derive(Parser)]
#[command(name = "rppg", version, about = "Heart-rate estimation from facial-video pixel traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate heart rate from a PPM frame sequence.
    Estimate(EstimateArgs),
    /// Estimate heart rate from a trace CSV.
    EstimateTrace(EstimateTraceArgs),
    /// Compare an estimate CSV against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate synthetic traces or frames with known heart rate.
    Synth(SynthArgs),
    /// Emit the per-channel power spectra of a trace CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Args, Clone)]
struct PipelineFlags {
    /// Disable NLMS illumination rectification.
    #[arg(long)]
    no_rectify: bool,
    /// NLMS filter order (taps).
    #[arg(long, default_value_t = 8)]
    nlms_order: usize,
    /// NLMS step size in (0, 2].
    #[arg(long, default_value_t = 0.5)]
    nlms_mu: f64,
    /// NLMS energy regularizer.
    #[arg(long, default_value_t = 1e-6)]
    nlms_eps: f64,
    /// Pulse band lower edge, Hz.
    #[arg(long, default_value_t = 0.7)]
    band_low: f64,
    /// Pulse band upper edge, Hz.
    #[arg(long, default_value_t = 4.0)]
    band_high: f64,
    /// Sliding window length, seconds.
    #[arg(long, default_value_t = 30.0)]
    window_s: f64,
    /// Sliding window step (reporting cadence), seconds.
    #[arg(long, default_value_t = 10.0)]
    step_s: f64,
    /// Disable ICA and read the green channel directly.
    #[arg(long)]
    no_ica: bool,
    /// Seed for the ICA initialization.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Override the sample rate instead of trusting the input file.
    #[arg(long)]
    fs_override: Option<f64>,
}

impl PipelineFlags {
    fn to_config(&self) -> PipelineConfig {
        PipelineConfig {
            rectify_enabled: !self.no_rectify,
            nlms: NlmsParams {
                order: self.nlms_order,
                mu: self.nlms_mu,
                eps: self.nlms_eps,
            },
            band: BandLimits {
                low: self.band_low,
                high: self.band_high,
            },
            window_s: self.window_s,
            step_s: self.step_s,
            ica_enabled: !self.no_ica,
            ica: IcaParams {
                seed: self.seed,
                ..IcaParams::default()
            },
            fs_override: self.fs_override,
            ..PipelineConfig::default()
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Frame-sequence manifest (JSON referencing PPM files).
    #[arg(long)]
    frames: PathBuf,
    /// ROI CSV from an external detector; omit to use the skin fallback.
    #[arg(long)]
    roi: Option<PathBuf>,
    /// Output heart-rate CSV (t_s,hr_bpm).
    #[arg(long)]
    out: PathBuf,
    /// Optional machine-readable run log (JSON).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct EstimateTraceArgs {
    /// Trace CSV (t,R,G,B[,R_bg,G_bg,B_bg]).
    #[arg(long)]
    trace: PathBuf,
    /// Output heart-rate CSV (t_s,hr_bpm).
    #[arg(long)]
    out: PathBuf,
    /// Optional machine-readable run log (JSON).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated heart-rate CSV.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth heart-rate CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Output report JSON (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    what: SynthWhat,
}

#[derive(Subcommand)]
enum SynthWhat {
    /// Write trace.csv and gt.csv.
    Trace(SynthCommon),
    /// Write a PPM frame sequence plus gt.csv and roi.csv.
    Frames(SynthFramesArgs),
}

#[derive(Args, Clone)]
struct SynthCommon {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Constant heart rate, bpm.
    #[arg(long, default_value_t = 72.0)]
    hr: f64,
    /// Piecewise-linear profile "t:bpm,t:bpm,..." (overrides --hr).
    #[arg(long)]
    hr_profile: Option<String>,
    /// Duration, seconds.
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    /// Sample rate / frame rate, Hz.
    #[arg(long, default_value_t = 60.0)]
    fs: f64,
    /// Gaussian noise, intensity units.
    #[arg(long, default_value_t = 0.4)]
    noise_std: f64,
    /// Flash artifact "start:end:magnitude" (repeatable).
    #[arg(long = "flash", value_name = "S:E:MAG")]
    flashes: Vec<String>,
    /// Foreground drift artifact "start:end:magnitude" (repeatable).
    #[arg(long = "drift", value_name = "S:E:MAG")]
    drifts: Vec<String>,
    /// Split-lighting artifact "start:end:magnitude" (repeatable).
    #[arg(long = "split", value_name = "S:E:MAG")]
    splits: Vec<String>,
    /// Generator seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthFramesArgs {
    #[command(flatten)]
    common: SynthCommon,
    /// Frame width, pixels.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Frame height, pixels.
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Horizontal face speed, px/s.
    #[arg(long, default_value_t = 0.0)]
    move_px_s: f64,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Trace CSV (t,R,G,B[,...]).
    #[arg(long)]
    trace: PathBuf,
    /// Output CSV (freq_hz,power_r,power_g,power_b).
    #[arg(long)]
    out: PathBuf,
    /// Maximum spectral bin spacing, Hz.
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
    /// Detrend window applied before the spectrum, seconds.
    #[arg(long, default_value_t = 1.5)]
    detrend_window_s: f64,
}

fn parse_artifact(kind: ArtifactKind, text: &str) -> anyhow::Result<ArtifactEvent> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("artifact '{text}' is not start:end:magnitude");
    }
    let num = |s: &str| -> anyhow::Result<f64> {
        s.parse().with_context(|| format!("'{s}' is not a number"))
    };
    Ok(ArtifactEvent {
        kind,
        start: num(parts[0])?,
        end: num(parts[1])?,
        magnitude: num(parts[2])?,
    })
}

fn parse_profile(text: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut profile = Vec::new();
    for part in text.split(',') {
        let Some((t, bpm)) = part.split_once(':') else {
            bail!("profile point '{part}' is not t:bpm");
        };
        profile.push((
            t.trim().parse().with_context(|| format!("bad time '{t}'"))?,
            bpm.trim().parse().with_context(|| format!("bad bpm '{bpm}'"))?,
        ));
    }
    Ok(profile)
}

fn build_spec(common: &SynthCommon) -> anyhow::Result<SynthSpec> {
    let hr_profile = match &common.hr_profile {
        Some(text) => parse_profile(text)?,
        None => vec![(0.0, common.hr)],
    };
    let mut artifacts = Vec::new();
    for f in &common.flashes {
        artifacts.push(parse_artifact(ArtifactKind::Flash, f)?);
    }
    for d in &common.drifts {
        artifacts.push(parse_artifact(ArtifactKind::ForegroundDrift, d)?);
    }
    for s in &common.splits {
        artifacts.push(parse_artifact(ArtifactKind::SplitLighting, s)?);
    }
    Ok(SynthSpec {
        duration: common.duration,
        fs: common.fs,
        hr_profile,
        noise_std: common.noise_std,
        artifacts,
        ..SynthSpec::constant_hr(common.hr, common.duration)
    })
}

fn write_log(log: &rppg_core::pipeline::RunLog, path: Option<&Path>) -> anyhow::Result<()> {
    if let Some(path) = path {
        std::fs::write(path, log.to_json())
            .with_context(|| format!("writing run log {}", path.display()))?;
    }
    for w in log.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let frames = ingest::load_frame_sequence(&args.frames)?;
    let roi = match &args.roi {
        Some(path) => RoiInput::External(ingest::load_roi_boxes(path, frames.len())?),
        None => RoiInput::SkinFallback,
    };
    let (hr, log) = run_estimate_frames(&frames, roi, &args.pipeline.to_config())?;
    ingest::write_hr_csv(&hr, &args.out)?;
    write_log(&log, args.log.as_deref())?;
    println!("{} estimates -> {}", hr.len(), args.out.display());
    Ok(())
}

fn cmd_estimate_trace(args: &EstimateTraceArgs) -> anyhow::Result<()> {
    let set = ingest::load_trace_csv(&args.trace)?;
    let (hr, log) = run_estimate_traces(&set, &args.pipeline.to_config())?;
    ingest::write_hr_csv(&hr, &args.out)?;
    write_log(&log, args.log.as_deref())?;
    println!("{} estimates -> {}", hr.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let report = rppg_core::pipeline::run_evaluate(&args.est, &args.gt)?;
    let json = eval::report_to_json(&report);
    if let Some(out) = &args.out {
        std::fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    match &args.what {
        SynthWhat::Trace(common) => {
            let spec = build_spec(common)?;
            let (set, gt) = synth_traces(&spec, common.seed)?;
            std::fs::create_dir_all(&common.out)
                .with_context(|| format!("creating {}", common.out.display()))?;
            ingest::write_trace_csv(&set, &common.out.join("trace.csv"))?;
            ingest::write_hr_csv(&gt, &common.out.join("gt.csv"))?;
            println!(
                "{} samples @ {} Hz -> {}",
                set.len(),
                set.fs,
                common.out.display()
            );
        }
        SynthWhat::Frames(fargs) => {
            let spec = build_spec(&fargs.common)?;
            let (frames, gt, roi) =
                synth_frames(&spec, fargs.width, fargs.height, fargs.move_px_s, fargs.common.seed)?;
            ingest::write_frame_sequence(&frames, &fargs.common.out)?;
            ingest::write_hr_csv(&gt, &fargs.common.out.join("gt.csv"))?;
            ingest::write_roi_csv(&roi.boxes, &fargs.common.out.join("roi.csv"))?;
            println!(
                "{} frames {}x{} @ {} fps -> {}",
                frames.len(),
                frames.width,
                frames.height,
                frames.fps,
                fargs.common.out.display()
            );
        }
    }
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs) -> anyhow::Result<()> {
    let set = ingest::load_trace_csv(&args.trace)?;
    let mut spectra = Vec::with_capacity(3);
    for trace in &set.foreground {
        let conditioned = detrend(&normalize(trace)?, args.detrend_window_s)?;
        spectra.push(power_spectrum(&conditioned, args.resolution)?);
    }
    ingest::write_spectrum_csv(
        &spectra[0].freqs,
        [&spectra[0].power, &spectra[1].power, &spectra[2].power],
        &args.out,
    )?;
    println!("{} bins -> {}", spectra[0].freqs.len(), args.out.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::EstimateTrace(args) => cmd_estimate_trace(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Spectrum(args) => cmd_spectrum(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let overlap = e
                .downcast_ref::<CoreError>()
                .map(|c| matches!(c.root(), CoreError::NoOverlap))
                .unwrap_or(false);
            if overlap {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
