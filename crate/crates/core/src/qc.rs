//! Participant and view quality gates.

use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{self, FormatError, FrameSequence};
use crate::metrics::{self, compensated_mean};
use crate::pipeline::{build_ground_truth, track_frequency, PipelineError};
use crate::session::{SessionState, StoredView, ViewFlags, ViewerSession};
use crate::types::{DisplayGeometry, MouseTrack, PipelineConfig, TrackSample, VideoMeta};

pub const REACTION_PERIOD_MS: f64 = 7000.0;
pub const REACTION_ATTEMPTS: usize = 3;
pub const REACTION_THRESHOLD: f64 = 0.30;

#[derive(Debug, Error)]
pub enum QcError {
    #[error("expected {expected} reaction attempts, got {found}")]
    AttemptCount { expected: usize, found: usize },
    #[error("invalid reaction attempt: {0}")]
    Attempt(String),
    #[error("no reference maps for validation video {0}")]
    MissingReference(String),
    #[error("no metadata for video {0}")]
    MissingVideo(String),
    #[error("reference for {video_id} is {found:?}, video is {expected:?}")]
    ReferenceMismatch { video_id: String, found: (usize, usize), expected: (usize, usize) },
    #[error("reference for {video_id}: {source}")]
    Reference { video_id: String, source: FormatError },
    #[error("stored track for slot {slot}: {source}")]
    Track { slot: usize, source: FormatError },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub fn check_screen(geometry: &DisplayGeometry, min_screen: (u32, u32)) -> bool {
    geometry.screen_w >= min_screen.0 && geometry.screen_h >= min_screen.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomRight,
    BottomLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Clockwise,
    CounterClockwise,
}

/// A `rect_w × rect_h` rectangle whose top-left corner travels the perimeter
/// of `[0, screen_w − rect_w] × [0, screen_h − rect_h]` at constant speed,
/// one lap per `period_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectTrajectory {
    pub screen_w: f64,
    pub screen_h: f64,
    pub rect_w: f64,
    pub rect_h: f64,
    pub period_ms: f64,
    pub start: Corner,
    pub direction: Direction,
}

/// Straight piece of the lap: the anchor moves from `from` at `t0` with
/// velocity `vel` (px/ms) until `t1`.
#[derive(Debug, Clone, Copy)]
struct Leg {
    t0: f64,
    t1: f64,
    from: (f64, f64),
    vel: (f64, f64),
}

impl RectTrajectory {
    /// Default test layout: a square of a fifth of the short side, starting
    /// top-left and moving clockwise.
    pub fn for_screen(screen_w: u32, screen_h: u32) -> Self {
        let side = (f64::from(screen_w.min(screen_h)) / 5.0).round();
        Self {
            screen_w: f64::from(screen_w),
            screen_h: f64::from(screen_h),
            rect_w: side,
            rect_h: side,
            period_ms: REACTION_PERIOD_MS,
            start: Corner::TopLeft,
            direction: Direction::Clockwise,
        }
    }

    fn validate(&self) -> Result<(), QcError> {
        let vals = [self.screen_w, self.screen_h, self.rect_w, self.rect_h, self.period_ms];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(QcError::Attempt("trajectory dimensions must be positive".into()));
        }
        if self.rect_w > self.screen_w || self.rect_h > self.screen_h {
            return Err(QcError::Attempt("rectangle larger than screen".into()));
        }
        Ok(())
    }

    fn legs(&self) -> Vec<Leg> {
        let (a, b) = (self.screen_w - self.rect_w, self.screen_h - self.rect_h);
        let clockwise = [(0.0, 0.0), (a, 0.0), (a, b), (0.0, b)];
        let s = match self.start {
            Corner::TopLeft => 0,
            Corner::TopRight => 1,
            Corner::BottomRight => 2,
            Corner::BottomLeft => 3,
        };
        let order: Vec<(f64, f64)> = (0..5)
            .map(|k| match self.direction {
                Direction::Clockwise => clockwise[(s + k) % 4],
                Direction::CounterClockwise => clockwise[(s + 4 - k % 4) % 4],
            })
            .collect();
        let lap = 2.0 * (a + b);
        if lap == 0.0 {
            return vec![Leg { t0: 0.0, t1: self.period_ms, from: (0.0, 0.0), vel: (0.0, 0.0) }];
        }
        let mut t = 0.0;
        let mut legs = Vec::with_capacity(4);
        for w in order.windows(2) {
            let len = (w[1].0 - w[0].0).abs() + (w[1].1 - w[0].1).abs();
            if len == 0.0 {
                continue;
            }
            let dur = self.period_ms * len / lap;
            let vel = ((w[1].0 - w[0].0) / dur, (w[1].1 - w[0].1) / dur);
            legs.push(Leg { t0: t, t1: t + dur, from: w[0], vel });
            t += dur;
        }
        if let Some(last) = legs.last_mut() {
            last.t1 = self.period_ms;
        }
        legs
    }

    /// Top-left corner of the rectangle at time `t_ms`.
    pub fn anchor_at(&self, t_ms: f64) -> (f64, f64) {
        let t = t_ms.rem_euclid(self.period_ms);
        let legs = self.legs();
        let leg = legs.iter().find(|l| t < l.t1).unwrap_or(&legs[legs.len() - 1]);
        let dt = t - leg.t0;
        (leg.from.0 + leg.vel.0 * dt, leg.from.1 + leg.vel.1 * dt)
    }

    pub fn contains_at(&self, t_ms: f64, x: f64, y: f64) -> bool {
        let (ax, ay) = self.anchor_at(t_ms);
        ax <= x && x <= ax + self.rect_w && ay <= y && y <= ay + self.rect_h
    }

    /// Measure of `{t ∈ [t0, t1] : point inside the rectangle}`.
    fn inside_time(&self, legs: &[Leg], x: f64, y: f64, t0: f64, t1: f64) -> f64 {
        let p = self.period_ms;
        let mut total = 0.0;
        let first_lap = (t0 / p).floor() as i64;
        let last_lap = (t1 / p).floor() as i64;
        for lap in first_lap..=last_lap {
            let base = lap as f64 * p;
            for leg in legs {
                let mut lo = t0.max(base + leg.t0);
                let mut hi = t1.min(base + leg.t1);
                for (pos, vel, point, size) in [(leg.from.0, leg.vel.0, x, self.rect_w), (leg.from.1, leg.vel.1, y, self.rect_h)] {
                    // anchor must lie in [point − size, point]
                    let (amin, amax) = (point - size, point);
                    if vel == 0.0 {
                        if !(amin <= pos && pos <= amax) {
                            hi = lo;
                        }
                    } else {
                        let ta = base + leg.t0 + (amin - pos) / vel;
                        let tb = base + leg.t0 + (amax - pos) / vel;
                        lo = lo.max(ta.min(tb));
                        hi = hi.min(ta.max(tb));
                    }
                }
                if hi > lo {
                    total += hi - lo;
                }
            }
        }
        total
    }
}

/// One lap of the reaction test with the cursor recorded during it.
/// Sample times are relative to the start of the lap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionAttempt {
    pub trajectory: RectTrajectory,
    pub cursor_samples: Vec<TrackSample>,
    pub duration_ms: f64,
}

impl ReactionAttempt {
    pub fn new(trajectory: RectTrajectory, cursor_samples: Vec<TrackSample>) -> Result<Self, QcError> {
        let attempt = Self { duration_ms: trajectory.period_ms, trajectory, cursor_samples };
        attempt.validate()?;
        Ok(attempt)
    }

    pub fn validate(&self) -> Result<(), QcError> {
        self.trajectory.validate()?;
        if self.duration_ms != self.trajectory.period_ms {
            return Err(QcError::Attempt(format!(
                "duration {} ms differs from the {} ms lap",
                self.duration_ms, self.trajectory.period_ms
            )));
        }
        let (w, h) = (self.trajectory.screen_w, self.trajectory.screen_h);
        for (i, s) in self.cursor_samples.iter().enumerate() {
            if ![s.t_ms, s.x, s.y].iter().all(|v| v.is_finite()) || s.t_ms < 0.0 {
                return Err(QcError::Attempt(format!("invalid sample {i}")));
            }
            if s.x < 0.0 || s.y < 0.0 || s.x > w || s.y > h {
                return Err(QcError::Attempt(format!("sample {i} is off screen")));
            }
            if i > 0 && s.t_ms <= self.cursor_samples[i - 1].t_ms {
                return Err(QcError::Attempt(format!("non-monotone timestamp at sample {i}")));
            }
        }
        Ok(())
    }
}

/// Fraction of the lap the cursor spends inside the moving rectangle. The
/// cursor holds its last sampled position until the next sample and counts
/// as outside before the first one.
pub fn score_reaction_attempt(attempt: &ReactionAttempt) -> f64 {
    let d = attempt.duration_ms;
    if attempt.cursor_samples.is_empty() || d <= 0.0 {
        return 0.0;
    }
    let legs = attempt.trajectory.legs();
    let samples = &attempt.cursor_samples;
    let inside: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t0 = s.t_ms.max(0.0);
            let t1 = samples.get(i + 1).map_or(d, |n| n.t_ms).min(d);
            if t1 > t0 {
                attempt.trajectory.inside_time(&legs, s.x, s.y, t0, t1)
            } else {
                0.0
            }
        })
        .sum();
    (inside / d).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionOutcome {
    pub fractions: Vec<f64>,
    pub best: f64,
    pub pass: bool,
}

/// Best-of-three rule with an inclusive threshold.
pub fn score_reaction_test(attempts: &[ReactionAttempt], threshold: f64) -> Result<ReactionOutcome, QcError> {
    if attempts.len() != REACTION_ATTEMPTS {
        return Err(QcError::AttemptCount { expected: REACTION_ATTEMPTS, found: attempts.len() });
    }
    let fractions: Vec<f64> = attempts.iter().map(score_reaction_attempt).collect();
    Ok(reaction_outcome(fractions, threshold))
}

pub fn reaction_outcome(fractions: Vec<f64>, threshold: f64) -> ReactionOutcome {
    let best = fractions.iter().copied().fold(0.0, f64::max);
    ReactionOutcome { pass: best >= threshold, best, fractions }
}

/// Per-locale map from spelled-out tokens to their canonical (digit) form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynonymTable {
    pub locales: BTreeMap<String, BTreeMap<String, String>>,
}

impl SynonymTable {
    pub fn english_digits() -> Self {
        let words = [
            "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
            "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
        ];
        let en = words.iter().enumerate().map(|(i, w)| (w.to_string(), i.to_string())).collect();
        Self { locales: BTreeMap::from([("en".to_string(), en)]) }
    }

    /// Exact locale first, then its language prefix (`en-GB` → `en`).
    pub fn for_locale(&self, locale: &str) -> Option<&BTreeMap<String, String>> {
        let lower = locale.to_lowercase();
        self.locales.get(&lower).or_else(|| {
            let lang = lower.split(['-', '_']).next().unwrap_or("");
            self.locales.get(lang)
        })
    }
}

/// Lowercases, collapses whitespace and maps tokens through the synonym
/// table. Runs of single digits are read as one number, so "four two",
/// "4 2" and "42" all normalize to "42".
pub fn normalize_answer(raw: &str, synonyms: Option<&BTreeMap<String, String>>) -> String {
    let lower = raw.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    let mut prev_digit = false;
    for tok in lower.split_whitespace() {
        let tok = synonyms.and_then(|s| s.get(tok)).map_or(tok, String::as_str);
        let digit = tok.len() == 1 && tok.as_bytes()[0].is_ascii_digit();
        match out.last_mut() {
            Some(last) if digit && prev_digit => last.push_str(tok),
            _ => out.push(tok.to_string()),
        }
        prev_digit = digit;
    }
    out.join(" ")
}

pub fn verify_captcha(expected: &str, given: &str, synonyms: Option<&BTreeMap<String, String>>) -> bool {
    let expected = normalize_answer(expected, synonyms);
    !expected.is_empty() && expected == normalize_answer(given, synonyms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyCheck {
    pub hz: f64,
    pub pass: bool,
}

pub fn check_view_frequency(track: &MouseTrack, min_hz: f64) -> FrequencyCheck {
    let hz = track_frequency(track);
    FrequencyCheck { hz, pass: hz >= min_hz }
}

impl From<FrequencyCheck> for ViewFlags {
    fn from(c: FrequencyCheck) -> Self {
        ViewFlags { frequency_hz: c.hz, frequency_ok: c.pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationScore {
    pub video_id: String,
    pub mean_cc: Option<f64>,
    pub frames_scored: usize,
    pub pass: bool,
}

/// One validation video: the viewer's raw track (if uploaded) and eye-tracking
/// reference maps on the trimmed ground-truth timeline.
pub struct ValidationInput<'a> {
    pub video: &'a VideoMeta,
    pub track: Option<&'a MouseTrack>,
    pub reference: &'a dyn FrameSequence,
}

/// Renders the single viewer's track through the ground-truth chain and
/// averages per-frame CC against the reference, skipping flat frames.
pub fn check_validation_video(input: &ValidationInput<'_>, config: &PipelineConfig) -> Result<ValidationScore, QcError> {
    let video_id = input.video.video_id.clone();
    let fail = |video_id| ValidationScore { video_id, mean_cc: None, frames_scored: 0, pass: false };
    let Some(track) = input.track else { return Ok(fail(video_id)) };
    let gt = match build_ground_truth(input.video, std::slice::from_ref(track), config) {
        Ok(gt) => gt,
        Err(PipelineError::NoUsableViews(_)) => return Ok(fail(video_id)),
        Err(e) => return Err(e.into()),
    };
    let n = gt.frame_count().min(input.reference.len());
    let expected = (input.video.width as usize, input.video.height as usize);
    let ccs: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let reference = input
                .reference
                .frame(i)
                .map_err(|source| QcError::Reference { video_id: video_id.clone(), source })?;
            if reference.dims() != expected {
                return Err(QcError::ReferenceMismatch { video_id: video_id.clone(), found: reference.dims(), expected });
            }
            Ok(metrics::cc(&gt.render_frame(i), &reference).ok())
        })
        .collect::<Result<_, _>>()?;
    let defined: Vec<f64> = ccs.into_iter().flatten().collect();
    let frames_scored = defined.len();
    let mean_cc = compensated_mean(defined);
    let pass = mean_cc.is_some_and(|cc| cc >= config.validation_cc_threshold);
    Ok(ValidationScore { video_id, mean_cc, frames_scored, pass })
}

/// Every validation video must reach the threshold.
pub fn check_validation_videos(inputs: &[ValidationInput<'_>], config: &PipelineConfig) -> Result<(Vec<ValidationScore>, bool), QcError> {
    let scores: Vec<ValidationScore> = inputs.iter().map(|i| check_validation_video(i, config)).collect::<Result<_, _>>()?;
    let pass = !scores.is_empty() && scores.iter().all(|s| s.pass);
    Ok((scores, pass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewQc {
    pub slot: usize,
    pub video_id: String,
    pub is_validation: bool,
    pub frequency_hz: f64,
    pub frequency_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub session_id: String,
    pub viewer_id: String,
    pub screen_ok: bool,
    pub reaction_ok: bool,
    pub reaction_best: f64,
    pub captcha_ok: [bool; 2],
    pub complete: bool,
    pub views: Vec<ViewQc>,
    pub validation: Vec<ValidationScore>,
    pub validation_ok: bool,
    pub overall_pass: bool,
}

impl QcReport {
    /// Content views that may enter ground truth: the participant passed and
    /// the view itself passed the frequency gate.
    pub fn usable_views(&self) -> impl Iterator<Item = &ViewQc> {
        self.views.iter().filter(move |v| self.overall_pass && !v.is_validation && v.frequency_ok)
    }
}

/// Runs every gate over one stored session. Reaction attempts are re-scored
/// from the stored cursor data.
pub fn qc_session(
    session: &ViewerSession,
    views: &[StoredView],
    videos: &BTreeMap<String, VideoMeta>,
    references: &BTreeMap<String, Box<dyn FrameSequence>>,
    config: &PipelineConfig,
) -> Result<QcReport, QcError> {
    let screen_ok = check_screen(&session.geometry, config.min_screen);
    let reaction = if session.reaction_attempts.is_empty() {
        reaction_outcome(vec![session.reaction_best.unwrap_or(0.0)], REACTION_THRESHOLD)
    } else {
        score_reaction_test(&session.reaction_attempts, REACTION_THRESHOLD)?
    };

    let mut tracks: BTreeMap<usize, MouseTrack> = BTreeMap::new();
    let mut view_qc = Vec::with_capacity(views.len());
    for v in views {
        let track = formats::load_track(v.track.as_bytes()).map_err(|source| QcError::Track { slot: v.slot, source })?;
        let freq = check_view_frequency(&track, config.min_track_hz);
        let is_validation = session.playlist.get(v.slot).is_some_and(|e| e.is_validation);
        view_qc.push(ViewQc {
            slot: v.slot,
            video_id: v.video_id.clone(),
            is_validation,
            frequency_hz: freq.hz,
            frequency_ok: freq.pass,
        });
        tracks.insert(v.slot, track);
    }
    view_qc.sort_by_key(|v| v.slot);

    let mut inputs = Vec::new();
    for (slot, entry) in session.playlist.iter().enumerate().filter(|(_, e)| e.is_validation) {
        let video = videos.get(&entry.video_id).ok_or_else(|| QcError::MissingVideo(entry.video_id.clone()))?;
        let reference = references.get(&entry.video_id).ok_or_else(|| QcError::MissingReference(entry.video_id.clone()))?;
        inputs.push(ValidationInput { video, track: tracks.get(&slot), reference: reference.as_ref() });
    }
    let (validation, validation_ok) = check_validation_videos(&inputs, config)?;

    let complete = session.state == SessionState::Finalized;
    let overall_pass =
        screen_ok && reaction.pass && session.captcha_passed.iter().all(|c| *c) && complete && validation_ok;
    Ok(QcReport {
        session_id: session.session_id.clone(),
        viewer_id: session.viewer_id.clone(),
        screen_ok,
        reaction_ok: reaction.pass,
        reaction_best: reaction.best,
        captcha_ok: session.captcha_passed,
        complete,
        views: view_qc,
        validation,
        validation_ok,
        overall_pass,
    })
}

/// One row per session. `validation_cc` lists `video=cc` pairs separated by
/// `;`, with an empty cc when no frame could be scored.
pub fn report_csv(reports: &[QcReport]) -> String {
    let mut out = String::from(
        "session_id,viewer_id,screen_ok,reaction_ok,reaction_best,captcha1_ok,captcha2_ok,complete,views_ok,views_failed,validation_cc,validation_ok,overall_pass\n",
    );
    for r in reports {
        let ok = r.views.iter().filter(|v| v.frequency_ok).count();
        let cc: Vec<String> = r
            .validation
            .iter()
            .map(|s| format!("{}={}", s.video_id, s.mean_cc.map(|c| format!("{c:.6}")).unwrap_or_default()))
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{},{},{},{},{},{}",
            r.session_id,
            r.viewer_id,
            r.screen_ok,
            r.reaction_ok,
            r.reaction_best,
            r.captcha_ok[0],
            r.captcha_ok[1],
            r.complete,
            ok,
            r.views.len() - ok,
            cc.join(";"),
            r.validation_ok,
            r.overall_pass
        );
    }
    out
}
