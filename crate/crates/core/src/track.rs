//! Face ROI provisioning and stabilization: a skin-chroma fallback detector,
//! Shi-Tomasi feature selection and a pyramidal Lucas-Kanade tracker that
//! translates the frame-0 box by the median feature displacement.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{FrameSequence, GrayImage, RoiBox};

/// Tracked corner with sub-pixel position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
    pub id: usize,
    pub alive: bool,
}

/// Where the per-frame boxes came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoiSource {
    External,
    SkinFallback,
}

/// One ROI per frame plus the continuous translation estimate applied to
/// the frame-0 box (useful for sub-pixel accuracy checks; `boxes` carries
/// the rounded, clamped version).
#[derive(Debug, Clone)]
pub struct RoiTrack {
    pub boxes: Vec<RoiBox>,
    pub source: RoiSource,
    pub stabilized: bool,
    pub offsets: Vec<(f64, f64)>,
}

// Lucas-Kanade parameters.
const LK_LEVELS: usize = 3;
const LK_WINDOW: usize = 15;
const LK_HALF: usize = LK_WINDOW / 2;
const LK_MAX_ITERS: usize = 30;
const LK_EPSILON: f64 = 0.01;
/// Kill threshold on the mean squared window residual.
const LK_MAX_RESIDUAL: f64 = 20.0;

// Shi-Tomasi parameters.
const NMS_RADIUS: f64 = 5.0;
const SCORE_FRACTION: f64 = 0.01;

/// Feature budget and re-detection threshold used by [`stabilize_roi`].
const STABILIZE_MAX_FEATURES: usize = 64;
const REDETECT_FRACTION: f64 = 0.25;

/// Keep feature windows inside the box: a feature on the box edge sees
/// half stationary background in its integration window and reports a
/// compromise displacement. Shrink only while a usable area remains.
fn shrink_for_tracking(b: &RoiBox) -> RoiBox {
    let m = LK_HALF;
    if b.w > 2 * m + 2 && b.h > 2 * m + 2 {
        RoiBox::new(b.x + m, b.y + m, b.w - 2 * m, b.h - 2 * m)
    } else {
        *b
    }
}

/// RGB skin-chroma rule of the fallback detector.
fn is_skin(r: u8, g: u8, b: u8) -> bool {
    let (ri, gi, bi) = (r as i32, g as i32, b as i32);
    let max = ri.max(gi).max(bi);
    let min = ri.min(gi).min(bi);
    ri > 95 && gi > 40 && bi > 20 && max - min > 15 && (ri - gi).abs() > 15 && ri > gi && ri > bi
}

/// Bounding box of the largest 4-connected skin-colored component,
/// expanded by 5% per side and clamped to the frame.
pub fn detect_skin_roi(frame: &[u8], width: usize, height: usize) -> Result<RoiBox> {
    let mut mask = vec![false; width * height];
    let mut any = false;
    for i in 0..width * height {
        let px = i * 3;
        if is_skin(frame[px], frame[px + 1], frame[px + 2]) {
            mask[i] = true;
            any = true;
        }
    }
    if !any {
        return Err(Error::NoSkinPixels);
    }

    // Largest component by pixel count, scan order breaking ties.
    let mut visited = vec![false; width * height];
    let mut best: Option<(usize, usize, usize, usize, usize)> = None; // count, x0, y0, x1, y1
    let mut queue = Vec::new();
    for start in 0..width * height {
        if !mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let (mut count, mut x0, mut y0, mut x1, mut y1) =
            (0usize, width, height, 0usize, 0usize);
        while let Some(i) = queue.pop() {
            count += 1;
            let (x, y) = (i % width, i / width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut push = |j: usize| {
                if mask[j] && !visited[j] {
                    visited[j] = true;
                    queue.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < width {
                push(i + 1);
            }
            if y > 0 {
                push(i - width);
            }
            if y + 1 < height {
                push(i + width);
            }
        }
        if best.map_or(true, |(c, ..)| count > c) {
            best = Some((count, x0, y0, x1, y1));
        }
    }

    let (_, x0, y0, x1, y1) = best.unwrap();
    let w = x1 - x0 + 1;
    let h = y1 - y0 + 1;
    let ex = (w as f64 * 0.05).round() as usize;
    let ey = (h as f64 * 0.05).round() as usize;
    let bx0 = x0.saturating_sub(ex);
    let by0 = y0.saturating_sub(ey);
    let bx1 = (x0 + w + ex).min(width);
    let by1 = (y0 + h + ey).min(height);
    Ok(RoiBox::new(bx0, by0, bx1 - bx0, by1 - by0))
}

/// Shi-Tomasi score map over the ROI: min eigenvalue of the 2x2 structure
/// tensor accumulated over a 3x3 window of Sobel gradients.
fn shi_tomasi_scores(gray: &GrayImage, roi: &RoiBox) -> Vec<(f64, usize, usize)> {
    let (w, h) = (gray.width, gray.height);
    let mut ix = vec![0.0f64; w * h];
    let mut iy = vec![0.0f64; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let p = |dx: isize, dy: isize| {
                gray.data[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            ix[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            iy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }

    let mut scores = Vec::new();
    let x_lo = roi.x.max(2);
    let y_lo = roi.y.max(2);
    let x_hi = (roi.x + roi.w).min(w.saturating_sub(2));
    let y_hi = (roi.y + roi.h).min(h.saturating_sub(2));
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for wy in -1isize..=1 {
                for wx in -1isize..=1 {
                    let i = (y as isize + wy) as usize * w + (x as isize + wx) as usize;
                    sxx += ix[i] * ix[i];
                    sxy += ix[i] * iy[i];
                    syy += iy[i] * iy[i];
                }
            }
            let trace = sxx + syy;
            let det_part = ((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy).sqrt();
            let min_eig = 0.5 * (trace - det_part);
            if min_eig > 0.0 {
                scores.push((min_eig, x, y));
            }
        }
    }
    scores
}

/// Select up to `max_n` corners inside `roi`, strongest first, with
/// non-maximum suppression of radius 5 px and a relative score floor of
/// 1% of the best corner. Deterministic for identical input.
pub fn select_features(gray: &GrayImage, roi: &RoiBox, max_n: usize) -> Vec<FeaturePoint> {
    let mut scores = shi_tomasi_scores(gray, roi);
    if scores.is_empty() {
        return Vec::new();
    }
    scores.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.2.cmp(&b.2))
            .then(a.1.cmp(&b.1))
    });
    let floor = scores[0].0 * SCORE_FRACTION;

    let mut selected: Vec<FeaturePoint> = Vec::new();
    for &(score, x, y) in &scores {
        if selected.len() >= max_n || score < floor {
            break;
        }
        let (fx, fy) = (x as f64, y as f64);
        let clear = selected
            .iter()
            .all(|p| (p.x - fx).hypot(p.y - fy) >= NMS_RADIUS);
        if clear {
            selected.push(FeaturePoint {
                x: fx,
                y: fy,
                id: selected.len(),
                alive: true,
            });
        }
    }
    selected
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let ax = x - x0 as f64;
    let ay = y - y0 as f64;
    let top = img.data[y0 * img.width + x0] * (1.0 - ax) + img.data[y0 * img.width + x1] * ax;
    let bot = img.data[y1 * img.width + x0] * (1.0 - ax) + img.data[y1 * img.width + x1] * ax;
    top * (1.0 - ay) + bot * ay
}

/// 2x downsampling by 2x2 block averaging.
fn downsample(img: &GrayImage) -> GrayImage {
    let w = img.width / 2;
    let h = img.height / 2;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = 2 * y * img.width + 2 * x;
            data.push(
                (img.data[i] + img.data[i + 1] + img.data[i + img.width] + img.data[i + img.width + 1])
                    / 4.0,
            );
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

fn build_pyramid(img: &GrayImage) -> Vec<GrayImage> {
    let mut levels = vec![img.clone()];
    for _ in 1..LK_LEVELS {
        let prev = levels.last().unwrap();
        if prev.width / 2 < 4 || prev.height / 2 < 4 {
            break;
        }
        levels.push(downsample(prev));
    }
    levels
}

/// The integration window (plus 1 px gradient margin) fits around (cx, cy).
fn window_ok(img: &GrayImage, cx: f64, cy: f64) -> bool {
    let m = (LK_HALF + 1) as f64;
    cx >= m && cy >= m && cx <= img.width as f64 - 1.0 - m && cy <= img.height as f64 - 1.0 - m
}

struct LevelPatch {
    values: Vec<f64>,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
    gxx: f64,
    gxy: f64,
    gyy: f64,
}

fn sample_patch(img: &GrayImage, cx: f64, cy: f64) -> LevelPatch {
    let side = LK_WINDOW;
    let mut values = Vec::with_capacity(side * side);
    let mut grad_x = Vec::with_capacity(side * side);
    let mut grad_y = Vec::with_capacity(side * side);
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for wy in 0..side {
        for wx in 0..side {
            let px = cx + wx as f64 - LK_HALF as f64;
            let py = cy + wy as f64 - LK_HALF as f64;
            values.push(bilinear(img, px, py));
            let dx = (bilinear(img, px + 1.0, py) - bilinear(img, px - 1.0, py)) / 2.0;
            let dy = (bilinear(img, px, py + 1.0) - bilinear(img, px, py - 1.0)) / 2.0;
            grad_x.push(dx);
            grad_y.push(dy);
            gxx += dx * dx;
            gxy += dx * dy;
            gyy += dy * dy;
        }
    }
    LevelPatch {
        values,
        grad_x,
        grad_y,
        gxx,
        gxy,
        gyy,
    }
}

/// Track one point through the pyramids. Returns the new position, or None
/// when the point is lost.
fn track_point(
    prev_pyr: &[GrayImage],
    next_pyr: &[GrayImage],
    x: f64,
    y: f64,
) -> Option<(f64, f64)> {
    let levels = prev_pyr.len();
    let mut gx = 0.0f64;
    let mut gy = 0.0f64;
    let mut final_patch: Option<(LevelPatch, f64, f64)> = None;

    for level in (0..levels).rev() {
        let scale = (1 << level) as f64;
        let prev = &prev_pyr[level];
        let next = &next_pyr[level];
        let ux = x / scale;
        let uy = y / scale;

        // Levels too small for the window are skipped; at level 0 the
        // window must fit or the point dies.
        if !window_ok(prev, ux, uy) {
            if level == 0 {
                return None;
            }
            gx *= 2.0;
            gy *= 2.0;
            continue;
        }

        let patch = sample_patch(prev, ux, uy);
        let det = patch.gxx * patch.gyy - patch.gxy * patch.gxy;
        if det.abs() < 1e-9 {
            if level == 0 {
                return None;
            }
            gx *= 2.0;
            gy *= 2.0;
            continue;
        }

        let mut vx = 0.0f64;
        let mut vy = 0.0f64;
        let mut valid = window_ok(next, ux + gx + vx, uy + gy + vy);
        if !valid && level == 0 {
            return None;
        }
        if valid {
            for _ in 0..LK_MAX_ITERS {
                let (mut bx, mut by) = (0.0, 0.0);
                let mut idx = 0;
                for wy in 0..LK_WINDOW {
                    for wx in 0..LK_WINDOW {
                        let px = ux + gx + vx + wx as f64 - LK_HALF as f64;
                        let py = uy + gy + vy + wy as f64 - LK_HALF as f64;
                        let diff = patch.values[idx] - bilinear(next, px, py);
                        bx += diff * patch.grad_x[idx];
                        by += diff * patch.grad_y[idx];
                        idx += 1;
                    }
                }
                let ex = (patch.gyy * bx - patch.gxy * by) / det;
                let ey = (patch.gxx * by - patch.gxy * bx) / det;
                vx += ex;
                vy += ey;
                if !window_ok(next, ux + gx + vx, uy + gy + vy) {
                    if level == 0 {
                        return None;
                    }
                    valid = false;
                    break;
                }
                if ex.hypot(ey) < LK_EPSILON {
                    break;
                }
            }
        }
        let _ = valid;

        if level == 0 {
            final_patch = Some((patch, ux + gx + vx, uy + gy + vy));
            gx += vx;
            gy += vy;
        } else {
            gx = 2.0 * (gx + vx);
            gy = 2.0 * (gy + vy);
        }
    }

    // Residual gate: mean squared window difference at the final position.
    if let Some((patch, cx, cy)) = final_patch {
        let next = &next_pyr[0];
        let mut ssd = 0.0;
        let mut idx = 0;
        for wy in 0..LK_WINDOW {
            for wx in 0..LK_WINDOW {
                let px = cx + wx as f64 - LK_HALF as f64;
                let py = cy + wy as f64 - LK_HALF as f64;
                let d = patch.values[idx] - bilinear(next, px, py);
                ssd += d * d;
                idx += 1;
            }
        }
        if ssd / (LK_WINDOW * LK_WINDOW) as f64 > LK_MAX_RESIDUAL {
            return None;
        }
        let nx = x + gx;
        let ny = y + gy;
        if nx < 0.0 || ny < 0.0 || nx > next.width as f64 - 1.0 || ny > next.height as f64 - 1.0 {
            return None;
        }
        return Some((nx, ny));
    }
    None
}

/// Pyramidal Lucas-Kanade from `prev_gray` to `next_gray`. Lost points come
/// back with `alive = false` and their last known position.
pub fn track_features(
    prev_gray: &GrayImage,
    next_gray: &GrayImage,
    points: &[FeaturePoint],
) -> Result<Vec<FeaturePoint>> {
    if prev_gray.width != next_gray.width || prev_gray.height != next_gray.height {
        return Err(Error::GeometryMismatch {
            context: "track_features rasters".into(),
            expected: prev_gray.width * prev_gray.height,
            actual: next_gray.width * next_gray.height,
        });
    }
    let prev_pyr = build_pyramid(prev_gray);
    let next_pyr = build_pyramid(next_gray);

    Ok(points
        .iter()
        .map(|p| {
            if !p.alive {
                return *p;
            }
            match track_point(&prev_pyr, &next_pyr, p.x, p.y) {
                Some((x, y)) => FeaturePoint {
                    x,
                    y,
                    id: p.id,
                    alive: true,
                },
                None => FeaturePoint {
                    alive: false,
                    ..*p
                },
            }
        })
        .collect())
}

struct TrackState {
    point: FeaturePoint,
    ref_x: f64,
    ref_y: f64,
    base_dx: f64,
    base_dy: f64,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Stabilize per-frame detector boxes: features are selected in the frame-0
/// box and tracked forward; each frame's box is the frame-0 box translated
/// by the median displacement of the live tracks. Re-detection fires when
/// fewer than 25% of the initial features survive. If tracking collapses
/// entirely the input boxes are returned with `stabilized = false`.
pub fn stabilize_roi(
    boxes: &[RoiBox],
    frames: &FrameSequence,
    source: RoiSource,
) -> Result<RoiTrack> {
    if boxes.len() != frames.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len(),
            actual: boxes.len(),
        });
    }
    for b in boxes {
        b.ensure_inside(frames.width, frames.height)?;
    }
    let fallback = |stabilized: bool| RoiTrack {
        boxes: boxes.to_vec(),
        source,
        stabilized,
        offsets: vec![(0.0, 0.0); boxes.len()],
    };
    if frames.is_empty() {
        return Ok(fallback(false));
    }

    let box0 = boxes[0];
    let mut prev_gray = frames.luma(0);
    let mut initial = select_features(&prev_gray, &shrink_for_tracking(&box0), STABILIZE_MAX_FEATURES);
    if initial.is_empty() {
        initial = select_features(&prev_gray, &box0, STABILIZE_MAX_FEATURES);
    }
    if initial.is_empty() {
        return Ok(fallback(false));
    }

    let mut tracks: Vec<TrackState> = initial
        .into_iter()
        .map(|p| TrackState {
            ref_x: p.x,
            ref_y: p.y,
            base_dx: 0.0,
            base_dy: 0.0,
            point: p,
        })
        .collect();
    let mut target = tracks.len();

    let mut out_boxes = Vec::with_capacity(frames.len());
    let mut offsets = Vec::with_capacity(frames.len());
    out_boxes.push(box0);
    offsets.push((0.0, 0.0));

    for t in 1..frames.len() {
        let next_gray = frames.luma(t);
        let pts: Vec<FeaturePoint> = tracks.iter().map(|s| s.point).collect();
        let tracked = track_features(&prev_gray, &next_gray, &pts)?;
        for (state, p) in tracks.iter_mut().zip(tracked) {
            state.point = p;
        }
        tracks.retain(|s| s.point.alive);

        let offset = if tracks.is_empty() {
            offsets[t - 1]
        } else {
            let dx = median(
                tracks
                    .iter()
                    .map(|s| s.base_dx + s.point.x - s.ref_x)
                    .collect(),
            );
            let dy = median(
                tracks
                    .iter()
                    .map(|s| s.base_dy + s.point.y - s.ref_y)
                    .collect(),
            );
            (dx, dy)
        };
        let current_box = box0.translated_clamped(offset.0, offset.1, frames.width, frames.height);

        if (tracks.len() as f64) < target as f64 * REDETECT_FRACTION {
            let mut fresh =
                select_features(&next_gray, &shrink_for_tracking(&current_box), STABILIZE_MAX_FEATURES);
            if fresh.is_empty() {
                fresh = select_features(&next_gray, &current_box, STABILIZE_MAX_FEATURES);
            }
            if fresh.is_empty() {
                if tracks.is_empty() {
                    return Ok(fallback(false));
                }
            } else {
                target = fresh.len();
                tracks = fresh
                    .into_iter()
                    .map(|p| TrackState {
                        ref_x: p.x,
                        ref_y: p.y,
                        base_dx: offset.0,
                        base_dy: offset.1,
                        point: p,
                    })
                    .collect();
            }
        }

        out_boxes.push(current_box);
        offsets.push(offset);
        prev_gray = next_gray;
    }

    Ok(RoiTrack {
        boxes: out_boxes,
        source,
        stabilized: true,
        offsets,
    })
}
