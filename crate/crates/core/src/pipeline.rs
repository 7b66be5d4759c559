//! Raw cursor tracks to per-frame fixations and rendered saliency maps.
//!
//! Ground truth is produced by a fixed chain of stages:
//! screen → video coordinates, uniform resampling, temporal shift (mouse
//! samples are moved earlier to compensate for cursor lag), head trimming,
//! frame assignment and Gaussian rendering.

use rayon::prelude::*;
use thiserror::Error;

use crate::formats::{FormatError, FrameSequence};
use crate::metrics;
use crate::types::{CoordSpace, FrameFixations, MouseTrack, PipelineConfig, SaliencyFrame, TrackSample, VideoMeta};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("track too short to resample")]
    TooShort,
    #[error("resample rate must be positive, got {0}")]
    BadRate(f64),
    #[error("video rect has zero width or height")]
    ZeroRect,
    #[error("track for video {video_id} is in {found} space, expected {expected} space")]
    WrongSpace { video_id: String, found: &'static str, expected: &'static str },
    #[error("track is for video {found}, expected {expected}")]
    WrongVideo { found: String, expected: String },
    #[error("video-space track is {found:?}, video is {expected:?}")]
    SpaceMismatch { found: (u32, u32), expected: (u32, u32) },
    #[error("no usable views for video {0}")]
    NoUsableViews(String),
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("degenerate reference (zero variance)")]
    DegenerateReference,
    #[error("no calibration videos")]
    NoVideos,
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Mean sampling rate in Hz; single-sample and zero-span tracks yield 0.
pub fn track_frequency(track: &MouseTrack) -> f64 {
    match (track.samples.first(), track.samples.last()) {
        (Some(first), Some(last)) if track.samples.len() > 1 => {
            let span_s = (last.t_ms - first.t_ms) / 1000.0;
            if span_s > 0.0 {
                (track.samples.len() - 1) as f64 / span_s
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

fn lerp_within(a: f64, b: f64, frac: f64) -> f64 {
    (a + (b - a) * frac).clamp(a.min(b), a.max(b))
}

/// Linear-interpolation resampling onto `t_first + k / rate` up to `t_last`.
pub fn resample_track(track: &MouseTrack, rate_hz: f64) -> Result<MouseTrack, PipelineError> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(PipelineError::BadRate(rate_hz));
    }
    let src = &track.samples;
    if src.len() < 2 {
        return Err(PipelineError::TooShort);
    }
    let step = 1000.0 / rate_hz;
    let t0 = src[0].t_ms;
    let t_last = src[src.len() - 1].t_ms;
    let n = ((t_last - t0) / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * step;
        while j + 1 < src.len() && src[j + 1].t_ms <= t {
            j += 1;
        }
        let a = src[j];
        let sample = if a.t_ms == t || j + 1 == src.len() {
            TrackSample::new(t, a.x, a.y)
        } else {
            let b = src[j + 1];
            let frac = (t - a.t_ms) / (b.t_ms - a.t_ms);
            TrackSample::new(t, lerp_within(a.x, b.x, frac), lerp_within(a.y, b.y, frac))
        };
        out.push(sample);
    }
    Ok(track.with_samples(out))
}

/// Maps screen coordinates into native video pixels through the recorded
/// video rect. Points outside the rect clamp to the nearest frame pixel.
pub fn map_to_video_coords(track: &MouseTrack, video: &VideoMeta) -> Result<MouseTrack, PipelineError> {
    if track.space != CoordSpace::Screen {
        return Err(PipelineError::WrongSpace {
            video_id: track.video_id.clone(),
            found: track.space.name(),
            expected: "screen",
        });
    }
    let rect = track.geometry.video_rect;
    if rect.w == 0 || rect.h == 0 {
        return Err(PipelineError::ZeroRect);
    }
    let sx = f64::from(video.width) / f64::from(rect.w);
    let sy = f64::from(video.height) / f64::from(rect.h);
    let max_x = f64::from(video.width - 1);
    let max_y = f64::from(video.height - 1);
    let samples = track
        .samples
        .iter()
        .map(|s| {
            TrackSample::new(
                s.t_ms,
                ((s.x - f64::from(rect.x)) * sx).clamp(0.0, max_x),
                ((s.y - f64::from(rect.y)) * sy).clamp(0.0, max_y),
            )
        })
        .collect();
    let mut out = track.with_samples(samples);
    out.space = CoordSpace::Video { width: video.width, height: video.height };
    Ok(out)
}

/// Moves every sample `shift_ms` earlier; samples landing before zero are dropped.
pub fn apply_temporal_shift(track: &MouseTrack, shift_ms: f64) -> MouseTrack {
    let samples = track
        .samples
        .iter()
        .filter_map(|s| {
            let t = s.t_ms - shift_ms;
            (t >= 0.0).then_some(TrackSample::new(t, s.x, s.y))
        })
        .collect();
    track.with_samples(samples)
}

/// Drops samples before `trim_ms` and rebases the rest onto the trimmed clock.
pub fn trim_head(track: &MouseTrack, trim_ms: f64) -> MouseTrack {
    let samples = track
        .samples
        .iter()
        .filter(|s| s.t_ms >= trim_ms)
        .map(|s| TrackSample::new(s.t_ms - trim_ms, s.x, s.y))
        .collect();
    track.with_samples(samples)
}

/// Runs one raw track through mapping, resampling, shift and trim.
pub fn process_track(track: &MouseTrack, video: &VideoMeta, config: &PipelineConfig) -> Result<MouseTrack, PipelineError> {
    if track.video_id != video.video_id {
        return Err(PipelineError::WrongVideo { found: track.video_id.clone(), expected: video.video_id.clone() });
    }
    let mapped = match track.space {
        CoordSpace::Screen => map_to_video_coords(track, video)?,
        CoordSpace::Video { width, height } => {
            if (width, height) != (video.width, video.height) {
                return Err(PipelineError::SpaceMismatch { found: (width, height), expected: (video.width, video.height) });
            }
            track.clone()
        }
    };
    let resampled = resample_track(&mapped, config.resample_hz)?;
    let shifted = apply_temporal_shift(&resampled, config.shift_ms);
    Ok(trim_head(&shifted, config.trim_ms))
}

/// Buckets video-space samples into frames `[i, i+1) * 1000/fps` for
/// `video.frame_count()` frames; later samples are discarded.
pub fn assign_fixations_to_frames(tracks: &[MouseTrack], video: &VideoMeta) -> Result<Vec<FrameFixations>, PipelineError> {
    let n_frames = video.frame_count();
    let mut frames: Vec<FrameFixations> = (0..n_frames).map(|i| FrameFixations::new(i, Vec::new())).collect();
    let max_x = f64::from(video.width - 1);
    let max_y = f64::from(video.height - 1);
    for track in tracks {
        match track.space {
            CoordSpace::Video { width, height } if (width, height) == (video.width, video.height) => {}
            CoordSpace::Video { width, height } => {
                return Err(PipelineError::SpaceMismatch {
                    found: (width, height),
                    expected: (video.width, video.height),
                })
            }
            CoordSpace::Screen => {
                return Err(PipelineError::WrongSpace {
                    video_id: track.video_id.clone(),
                    found: "screen",
                    expected: "video",
                })
            }
        }
        for s in &track.samples {
            if s.t_ms < 0.0 {
                continue;
            }
            // t * fps / 1000 keeps exact frame boundaries exact (t / (1000 / fps) does not).
            let index = (s.t_ms * video.fps / 1000.0).floor() as usize;
            if let Some(frame) = frames.get_mut(index) {
                let x = s.x.round().clamp(0.0, max_x) as u32;
                let y = s.y.round().clamp(0.0, max_y) as u32;
                frame.points.push((x, y));
            }
        }
    }
    Ok(frames)
}

/// Relative truncation error budget of the rendering kernel.
pub const RENDER_TOLERANCE: f64 = 1e-4;

/// Half-width of the square kernel support for `count` superposed fixations.
///
/// A pixel outside the support of every fixation sits farther than `radius`
/// from each of them, so the omitted mass is below
/// `count * exp(-radius^2 / 2 sigma^2)`, which this radius keeps under
/// `RENDER_TOLERANCE`. The frame maximum is at least 1 whenever a fixation
/// exists, so the bound holds relative to the maximum as well.
pub fn kernel_radius(sigma: f64, count: usize) -> usize {
    let count = count.max(1) as f64;
    (sigma * (2.0 * (count / RENDER_TOLERANCE).ln()).sqrt()).ceil() as usize
}

/// Sum of unnormalized Gaussians (peak 1) centred on every fixation.
pub fn render_saliency(fixations: &FrameFixations, width: usize, height: usize, sigma: f64) -> SaliencyFrame {
    let mut values = vec![0.0; width * height];
    if fixations.points.is_empty() || width == 0 || height == 0 {
        return SaliencyFrame::from_raw(width, height, values);
    }
    let mut points = fixations.points.clone();
    points.sort_unstable();
    let radius = kernel_radius(sigma, points.len()).min(width.max(height));
    let inv = 1.0 / (2.0 * sigma * sigma);
    // kernel[radius + d] = exp(-d^2 / 2 sigma^2)
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d * inv).exp()
        })
        .collect();

    let mut i = 0;
    while i < points.len() {
        let (fx, fy) = points[i];
        let mut multiplicity = 1.0;
        while i + 1 < points.len() && points[i + 1] == (fx, fy) {
            multiplicity += 1.0;
            i += 1;
        }
        i += 1;
        let (fx, fy) = (fx as usize, fy as usize);
        let x0 = fx.saturating_sub(radius);
        let x1 = (fx + radius).min(width - 1);
        let y0 = fy.saturating_sub(radius);
        let y1 = (fy + radius).min(height - 1);
        let kx = &kernel[radius + x0 - fx..=radius + x1 - fx];
        for y in y0..=y1 {
            let wy = multiplicity * kernel[radius + y - fy];
            let row = &mut values[y * width + x0..=y * width + x1];
            for (v, k) in row.iter_mut().zip(kx) {
                *v += wy * k;
            }
        }
    }
    SaliencyFrame::from_raw(width, height, values)
}

/// Processed fixations for one video; frames are rendered on demand.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Video metadata on the trimmed clock.
    pub video: VideoMeta,
    pub sigma: f64,
    pub fixations: Vec<FrameFixations>,
    pub usable_views: usize,
    pub dropped_views: usize,
}

impl GroundTruth {
    pub fn frame_count(&self) -> usize {
        self.fixations.len()
    }

    pub fn render_frame(&self, index: usize) -> SaliencyFrame {
        render_saliency(&self.fixations[index], self.video.width as usize, self.video.height as usize, self.sigma)
    }

    pub fn render_all(&self) -> Vec<SaliencyFrame> {
        (0..self.frame_count()).into_par_iter().map(|i| self.render_frame(i)).collect()
    }
}

/// Full ground-truth chain for one video. Tracks that end up empty or too
/// short to resample are dropped; at least one must survive.
pub fn build_ground_truth(
    video: &VideoMeta,
    raw_tracks: &[MouseTrack],
    config: &PipelineConfig,
) -> Result<GroundTruth, PipelineError> {
    let mut processed = Vec::with_capacity(raw_tracks.len());
    let mut dropped = 0;
    for track in raw_tracks {
        match process_track(track, video, config) {
            Ok(t) if !t.is_empty() => processed.push(t),
            Ok(_) | Err(PipelineError::TooShort) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if processed.is_empty() {
        return Err(PipelineError::NoUsableViews(video.video_id.clone()));
    }
    let trimmed = VideoMeta { duration_ms: config.effective_duration_ms(video), ..video.clone() };
    let fixations = assign_fixations_to_frames(&processed, &trimmed)?;
    Ok(GroundTruth {
        sigma: config.sigma_for(video),
        video: trimmed,
        fixations,
        usable_views: processed.len(),
        dropped_views: dropped,
    })
}

/// Alignment search result. `score_grid[s][t]` is the mean per-frame CC for
/// `candidate_shifts_ms[s]` and `candidate_trims_ms[t]` (`None` when no frame
/// had a defined CC).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCalibration {
    pub candidate_shifts_ms: Vec<f64>,
    pub candidate_trims_ms: Vec<f64>,
    pub best_shift_ms: f64,
    pub best_trim_ms: f64,
    pub best_score: f64,
    pub score_grid: Vec<Vec<Option<f64>>>,
}

/// One calibration video: raw mouse tracks plus reference maps on the
/// original (untrimmed) clock.
pub struct CalibrationVideo<'a> {
    pub video: &'a VideoMeta,
    pub tracks: &'a [MouseTrack],
    pub reference: &'a dyn FrameSequence,
}

/// Scores within this distance are treated as ties.
const SCORE_TIE: f64 = 1e-12;

/// Grid search over (shift, trim). For each pair the full pipeline renders
/// mouse maps; trimmed frame `i` is compared with reference frame
/// `i + round(trim * fps / 1000)`. Scores pool every defined frame of every
/// video. Ties go to the smaller shift, then the smaller trim.
pub fn calibrate_alignment(
    videos: &[CalibrationVideo<'_>],
    shifts_ms: &[f64],
    trims_ms: &[f64],
    base: &PipelineConfig,
) -> Result<AlignmentCalibration, PipelineError> {
    if shifts_ms.is_empty() || trims_ms.is_empty() {
        return Err(PipelineError::EmptyCandidates);
    }
    if videos.is_empty() {
        return Err(PipelineError::NoVideos);
    }
    let pairs: Vec<(usize, usize)> =
        (0..shifts_ms.len()).flat_map(|s| (0..trims_ms.len()).map(move |t| (s, t))).collect();
    let mut sums = vec![0.0; pairs.len()];
    let mut counts = vec![0usize; pairs.len()];
    let mut informative_reference = false;

    for cv in videos {
        let truths: Vec<Option<GroundTruth>> = pairs
            .iter()
            .map(|&(s, t)| {
                let config = PipelineConfig { shift_ms: shifts_ms[s], trim_ms: trims_ms[t], ..base.clone() };
                match build_ground_truth(cv.video, cv.tracks, &config) {
                    Ok(gt) => Ok(Some(gt)),
                    Err(PipelineError::NoUsableViews(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_, _>>()?;
        let offsets: Vec<usize> = pairs
            .iter()
            .map(|&(_, t)| (trims_ms[t] * cv.video.fps / 1000.0).round() as usize)
            .collect();

        let per_frame: Vec<(bool, Vec<Option<f64>>)> = (0..cv.reference.len())
            .into_par_iter()
            .map(|j| -> Result<_, PipelineError> {
                let reference = cv.reference.frame(j)?;
                if !metrics::has_variance(&reference) {
                    return Ok((false, vec![None; pairs.len()]));
                }
                let scores = pairs
                    .iter()
                    .enumerate()
                    .map(|(p, _)| {
                        let gt = truths[p].as_ref()?;
                        let i = j.checked_sub(offsets[p])?;
                        if i >= gt.frame_count() {
                            return None;
                        }
                        let rendered = gt.render_frame(i);
                        let rendered = if rendered.dims() == reference.dims() {
                            rendered
                        } else {
                            metrics::resize_prediction(&rendered, reference.width(), reference.height())
                        };
                        metrics::cc(&rendered, &reference).ok()
                    })
                    .collect();
                Ok((true, scores))
            })
            .collect::<Result<_, _>>()?;

        for (informative, scores) in per_frame {
            informative_reference |= informative;
            for (p, score) in scores.into_iter().enumerate() {
                if let Some(v) = score {
                    sums[p] += v;
                    counts[p] += 1;
                }
            }
        }
    }
    if !informative_reference {
        return Err(PipelineError::DegenerateReference);
    }

    let mut grid = vec![vec![None; trims_ms.len()]; shifts_ms.len()];
    let mut best: Option<(usize, usize, f64)> = None;
    for (p, &(s, t)) in pairs.iter().enumerate() {
        if counts[p] == 0 {
            continue;
        }
        let score = sums[p] / counts[p] as f64;
        grid[s][t] = Some(score);
        let better = match best {
            None => true,
            Some((bs, bt, bv)) => {
                if score > bv + SCORE_TIE {
                    true
                } else if score >= bv - SCORE_TIE {
                    (shifts_ms[s], trims_ms[t]) < (shifts_ms[bs], trims_ms[bt])
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((s, t, score));
        }
    }
    let (s, t, score) = best.ok_or(PipelineError::DegenerateReference)?;
    Ok(AlignmentCalibration {
        candidate_shifts_ms: shifts_ms.to_vec(),
        candidate_trims_ms: trims_ms.to_vec(),
        best_shift_ms: shifts_ms[s],
        best_trim_ms: trims_ms[t],
        best_score: score,
        score_grid: grid,
    })
}
