//! On-disk formats: PPM frame sequences with a JSON manifest, trace CSV,
//! ground-truth CSV and ROI CSV. Every loader has a matching writer so
//! values round-trip bit-exactly (integers) or to shortest-representation
//! precision (reals).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{Channel, ChannelTrace, ChannelTraceSet, FrameSequence, HrSeries, Region, RoiBox};

#[derive(Deserialize)]
struct Manifest {
    width: usize,
    height: usize,
    fps: f64,
    frames: Vec<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a JSON manifest and the binary PPM frames it references.
///
/// Timestamps are synthesized as `i / fps`.
pub fn load_frame_sequence(manifest_path: &Path) -> Result<FrameSequence> {
    let text = read_text(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if manifest.width == 0 || manifest.height == 0 || !(manifest.fps > 0.0) {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            msg: format!(
                "width/height must be > 0 and fps > 0 (got {}x{} @ {})",
                manifest.width, manifest.height, manifest.fps
            ),
        });
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for rel in &manifest.frames {
        let path = dir.join(rel);
        frames.push(decode_ppm(&path, manifest.width, manifest.height)?);
    }
    FrameSequence::from_frames(manifest.width, manifest.height, manifest.fps, frames)
}

/// Decode a binary PPM (magic `P6`, maxval 255) with the expected geometry.
fn decode_ppm(path: &Path, width: usize, height: usize) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let fmt = |msg: String| Error::PpmFormat {
        path: path.to_path_buf(),
        msg,
    };

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            return Err(fmt("comments are not supported".into()));
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P6" {
        return Err(fmt("magic is not P6".into()));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt("bad width".into()))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt("bad height".into()))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| fmt("bad maxval".into()))?;
    if maxval != 255 {
        return Err(fmt(format!("maxval must be 255, got {maxval}")));
    }
    if w != width || h != height {
        return Err(Error::GeometryMismatch {
            context: format!("{} header {w}x{h} vs manifest", path.display()),
            expected: width * height,
            actual: w * h,
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fmt("missing separator after maxval".into()));
    }
    pos += 1;
    let data = &bytes[pos..];
    let expected = width * height * 3;
    if data.len() != expected {
        return Err(Error::GeometryMismatch {
            context: format!("{} raster", path.display()),
            expected,
            actual: data.len(),
        });
    }
    Ok(data.to_vec())
}

/// Write a frame sequence as `manifest.json` plus one PPM per frame in `dir`.
pub fn write_frame_sequence(seq: &FrameSequence, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut names = Vec::with_capacity(seq.len());
    for (i, frame) in seq.frames.iter().enumerate() {
        let name = format!("frame_{i:06}.ppm");
        let path = dir.join(&name);
        let mut buf = format!("P6\n{} {}\n255\n", seq.width, seq.height).into_bytes();
        buf.extend_from_slice(frame);
        fs::write(&path, buf).map_err(|source| Error::Io { path, source })?;
        names.push(name);
    }
    let manifest = serde_json::json!({
        "width": seq.width,
        "height": seq.height,
        "fps": seq.fps,
        "frames": names,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).map_err(|source| {
        Error::Io {
            path: path.clone(),
            source,
        }
    })?;
    Ok(path)
}

/// Split a CSV line, trimming a trailing CR so both LF and CRLF files work.
fn csv_cells(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split(',').map(str::trim).collect()
}

fn parse_real(path: &Path, line: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg: format!("'{cell}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line,
            msg: format!("'{cell}' is not finite"),
        });
    }
    Ok(v)
}

/// Non-empty data lines with their 1-based line numbers, header verified.
fn csv_rows<'a>(path: &Path, text: &'a str, headers: &[&str]) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, l)) if !l.trim().is_empty() => break (i, l),
            Some(_) => continue,
            None => {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: "empty file".into(),
                })
            }
        }
    };
    let cells = csv_cells(header.1);
    if !headers.iter().any(|h| cells == csv_cells(h)) {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            line: header.0 + 1,
            msg: format!("unexpected header '{}'", header.1.trim_end()),
        });
    }
    let mut rows = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        rows.push((i + 1, csv_cells(l)));
    }
    Ok(rows)
}

/// 1 / median(dt), robust to a single corrupt timestamp.
fn infer_fs(times: &[f64]) -> f64 {
    let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dts.len();
    let median = if n % 2 == 1 {
        dts[n / 2]
    } else {
        (dts[n / 2 - 1] + dts[n / 2]) / 2.0
    };
    1.0 / median
}

/// Load a trace CSV (`t,R,G,B` with optional `R_bg,G_bg,B_bg` columns).
pub fn load_trace_csv(path: &Path) -> Result<ChannelTraceSet> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &["t,R,G,B", "t,R,G,B,R_bg,G_bg,B_bg"])?;
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            path: path.to_path_buf(),
        });
    }
    let ncols = rows[0].1.len();
    let has_bg = ncols == 7;

    let mut times = Vec::with_capacity(rows.len());
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); ncols - 1];
    for (line, cells) in &rows {
        if cells.len() != ncols {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("expected {ncols} columns, got {}", cells.len()),
            });
        }
        let t = parse_real(path, *line, cells[0])?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::NonMonotoneTime {
                    path: path.to_path_buf(),
                    line: *line,
                });
            }
        }
        times.push(t);
        for (c, cell) in cells[1..].iter().enumerate() {
            cols[c].push(parse_real(path, *line, cell)?);
        }
    }

    let fs = infer_fs(&times);
    let trace = |idx: usize, channel: Channel, region: Region| {
        ChannelTrace::new(cols[idx].clone(), fs, channel, region)
    };
    let foreground = [
        trace(0, Channel::R, Region::Foreground),
        trace(1, Channel::G, Region::Foreground),
        trace(2, Channel::B, Region::Foreground),
    ];
    let background = has_bg.then(|| {
        [
            trace(3, Channel::R, Region::Background),
            trace(4, Channel::G, Region::Background),
            trace(5, Channel::B, Region::Background),
        ]
    });
    Ok(ChannelTraceSet {
        foreground,
        background,
        fs,
    })
}

/// Write a trace set with times `i / fs`, inverse of [`load_trace_csv`].
pub fn write_trace_csv(set: &ChannelTraceSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(if set.background.is_some() {
        "t,R,G,B,R_bg,G_bg,B_bg\n"
    } else {
        "t,R,G,B\n"
    });
    for i in 0..set.len() {
        let t = i as f64 / set.fs;
        out.push_str(&format!(
            "{},{},{},{}",
            t, set.foreground[0].samples[i], set.foreground[1].samples[i], set.foreground[2].samples[i]
        ));
        if let Some(bg) = &set.background {
            out.push_str(&format!(
                ",{},{},{}",
                bg[0].samples[i], bg[1].samples[i], bg[2].samples[i]
            ));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a ground-truth heart-rate CSV (`t_s,hr_bpm`).
pub fn load_ground_truth(path: &Path) -> Result<HrSeries> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &["t_s,hr_bpm"])?;
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            path: path.to_path_buf(),
        });
    }
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for (line, cells) in &rows {
        if cells.len() != 2 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("expected 2 columns, got {}", cells.len()),
            });
        }
        let t = parse_real(path, *line, cells[0])?;
        let hr = parse_real(path, *line, cells[1])?;
        if hr <= 0.0 {
            return Err(Error::NonPositiveHr {
                path: path.to_path_buf(),
                line: *line,
            });
        }
        if let Some(&(prev, _)) = samples.last() {
            if t <= prev {
                return Err(Error::NonMonotoneTime {
                    path: path.to_path_buf(),
                    line: *line,
                });
            }
        }
        samples.push((t, hr));
    }
    HrSeries::new(samples)
}

/// Write a heart-rate series, inverse of [`load_ground_truth`].
pub fn write_hr_csv(series: &HrSeries, path: &Path) -> Result<()> {
    let mut out = String::from("t_s,hr_bpm\n");
    for (t, hr) in &series.samples {
        out.push_str(&format!("{t},{hr}\n"));
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load per-frame ROI boxes (`frame,x,y,w,h`), one row per frame index
/// `0..n_frames`, returned in frame order.
pub fn load_roi_boxes(path: &Path, n_frames: usize) -> Result<Vec<RoiBox>> {
    let text = read_text(path)?;
    let rows = csv_rows(path, &text, &["frame,x,y,w,h"])?;
    let mut boxes: Vec<Option<RoiBox>> = vec![None; n_frames];
    for (line, cells) in &rows {
        if cells.len() != 5 {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("expected 5 columns, got {}", cells.len()),
            });
        }
        let int = |cell: &str| -> Result<usize> {
            cell.parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("'{cell}' is not a non-negative integer"),
            })
        };
        let frame = int(cells[0])?;
        if frame >= n_frames {
            return Err(Error::IndexOutOfRange {
                index: frame,
                n_frames,
            });
        }
        if boxes[frame].is_some() {
            return Err(Error::DuplicateIndex { index: frame });
        }
        boxes[frame] = Some(RoiBox::new(int(cells[1])?, int(cells[2])?, int(cells[3])?, int(cells[4])?));
    }
    boxes
        .into_iter()
        .enumerate()
        .map(|(i, b)| b.ok_or(Error::MissingIndex { index: i }))
        .collect()
}

/// Write per-frame ROI boxes, inverse of [`load_roi_boxes`].
pub fn write_roi_csv(boxes: &[RoiBox], path: &Path) -> Result<()> {
    let mut out = String::from("frame,x,y,w,h\n");
    for (i, b) in boxes.iter().enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", i, b.x, b.y, b.w, b.h));
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a spectrum table `freq_hz,power_r,power_g,power_b`.
pub fn write_spectrum_csv(
    freqs: &[f64],
    powers: [&[f64]; 3],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("freq_hz,power_r,power_g,power_b\n");
    for (i, f) in freqs.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", f, powers[0][i], powers[1][i], powers[2][i]));
    }
    let mut file = fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
