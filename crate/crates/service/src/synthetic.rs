//! Synthetic corpus and a scripted viewer that drives the HTTP API like a
//! browser client would. Used by tests and the end-to-end command.
//!
//! Every video has a deterministic "eye" path. References for validation
//! videos are rendered from that path directly; the scripted viewer's cursor
//! follows the same path `lag_ms` late plus a little jitter, which is what
//! the temporal shift undoes.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::pipeline::{build_ground_truth, PipelineError};
use saliency_core::qc::RectTrajectory;
use saliency_core::types::{
    CoordSpace, DisplayGeometry, MouseTrack, PipelineConfig, Rect, SaliencyFrame, TrackSample, VideoMeta,
};
use serde_json::{json, Value};
use thiserror::Error;
use tower::ServiceExt;

use crate::api::{CreateSessionResponse, VideoDescriptor};
use crate::service::CaptchaItem;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub content: usize,
    pub validation: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub duration_ms: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { content: 20, validation: 3, width: 160, height: 90, fps: 10.0, duration_ms: 4000 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub videos: Vec<VideoMeta>,
    pub validation: Vec<String>,
    pub captchas: Vec<CaptchaItem>,
}

const SPOKEN: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];

impl SyntheticCorpus {
    /// Ids are `clip_000`, `clip_001`, ...; validation clips are spread
    /// through the id range so the id reveals nothing.
    pub fn new(spec: &CorpusSpec) -> Self {
        let total = spec.content + spec.validation;
        let stride = total.checked_div(spec.validation).unwrap_or(0);
        let mut videos = Vec::with_capacity(total);
        let mut validation = Vec::new();
        for i in 0..total {
            let id = format!("clip_{i:03}");
            let v = VideoMeta::new(&id, spec.width, spec.height, spec.fps, spec.duration_ms).expect("valid corpus spec");
            if stride > 0 && i % stride == stride / 2 && validation.len() < spec.validation {
                validation.push(id);
            }
            videos.push(v);
        }
        let captchas = (0..6)
            .map(|i| {
                let digits = format!("{}{}", (i * 3 + 1) % 10, (i * 7 + 4) % 10);
                CaptchaItem { id: format!("captcha_{i}"), answer: digits, audio: None }
            })
            .collect();
        Self { videos, validation, captchas }
    }

    /// Writes each captcha "clip" as the spoken form of its answer and points
    /// the bank at the files.
    pub fn write_captcha_audio(&mut self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for c in &mut self.captchas {
            let spoken: Vec<&str> = c.answer.bytes().map(|b| SPOKEN[usize::from(b - b'0')]).collect();
            let path = dir.join(format!("{}.txt", c.id));
            std::fs::write(&path, spoken.join(" "))?;
            c.audio = Some(path);
        }
        Ok(())
    }

    pub fn meta(&self) -> BTreeMap<String, VideoMeta> {
        self.videos.iter().map(|v| (v.video_id.clone(), v.clone())).collect()
    }

    pub fn video(&self, id: &str) -> Option<&VideoMeta> {
        self.videos.iter().find(|v| v.video_id == id)
    }
}

fn phase_of(video_id: &str) -> f64 {
    let h = video_id.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(u64::from(b)));
    (h % 1000) as f64 / 1000.0 * TAU
}

/// Eye position in video pixels at stimulus time `t_ms`.
pub fn eye_position(video: &VideoMeta, t_ms: f64) -> (f64, f64) {
    let (w, h) = (f64::from(video.width), f64::from(video.height));
    let p = phase_of(&video.video_id);
    let x = w / 2.0 + 0.32 * w * (TAU * t_ms / 3100.0 + p).sin();
    let y = h / 2.0 + 0.30 * h * (TAU * t_ms / 2300.0 + 2.0 * p).cos();
    (x.clamp(0.0, w - 1.0), y.clamp(0.0, h - 1.0))
}

/// Eye-tracking style reference maps: the eye path through the ground-truth
/// chain without temporal shift, on the trimmed timeline.
pub fn reference_maps(video: &VideoMeta, config: &PipelineConfig) -> Result<Vec<SaliencyFrame>, PipelineError> {
    let samples: Vec<TrackSample> = (0..=video.duration_ms / 10)
        .map(|i| {
            let t = (i * 10) as f64;
            let (x, y) = eye_position(video, t);
            TrackSample::new(t, x, y)
        })
        .collect();
    let geometry = DisplayGeometry::fit(video.width, video.height, video.width, video.height)
        .expect("video sized screen");
    let space = CoordSpace::Video { width: video.width, height: video.height };
    let track = MouseTrack::new("eye", video.video_id.clone(), space, geometry, samples)
        .expect("eye path stays inside the frame");
    let unshifted = PipelineConfig { shift_ms: 0.0, ..config.clone() };
    Ok(build_ground_truth(video, &[track], &unshifted)?.render_all())
}

#[derive(Debug, Clone)]
pub struct ScriptedViewer {
    pub screen_w: u32,
    pub screen_h: u32,
    pub locale: String,
    pub seed: u64,
    pub lag_ms: f64,
    pub sample_hz: f64,
    /// Uniform cursor noise amplitude in video pixels.
    pub jitter_px: f64,
    /// Follow the reaction rectangle; otherwise park the cursor mid-screen.
    pub follow_reaction: bool,
    /// Playlist slots uploaded at 2 Hz.
    pub slow_slots: Vec<usize>,
    /// Answer captchas in words instead of digits.
    pub spell_captcha: bool,
    /// Stop after this many uploads.
    pub stop_after: Option<usize>,
}

impl ScriptedViewer {
    pub fn new(seed: u64) -> Self {
        Self {
            screen_w: 1920,
            screen_h: 1080,
            locale: "en-US".into(),
            seed,
            lag_ms: 300.0,
            sample_hz: 60.0,
            jitter_px: 1.5,
            follow_reaction: true,
            slow_slots: Vec::new(),
            spell_captcha: false,
            stop_after: None,
        }
    }

    /// Three laps; each sample sits on the rectangle centre.
    pub fn reaction_samples(&self, trajectory: &RectTrajectory) -> Vec<Vec<[f64; 3]>> {
        let lap = |_| {
            (0..)
                .map(|i| f64::from(i) * 1000.0 / self.sample_hz)
                .take_while(|t| *t < trajectory.period_ms)
                .map(|t| {
                    if self.follow_reaction {
                        let (x, y) = trajectory.anchor_at(t);
                        [t, x + trajectory.rect_w / 2.0, y + trajectory.rect_h / 2.0]
                    } else {
                        [t, trajectory.screen_w / 2.0, trajectory.screen_h / 2.0]
                    }
                })
                .collect()
        };
        (0..3).map(lap).collect()
    }

    pub fn video_rect(&self, video: &VideoMeta) -> Rect {
        DisplayGeometry::fit(self.screen_w, self.screen_h, video.width, video.height)
            .expect("nonzero screen")
            .video_rect
    }

    /// Cursor samples on screen for one playback.
    pub fn view_samples(&self, video: &VideoMeta, slot: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
        let hz = if self.slow_slots.contains(&slot) { 2.0 } else { self.sample_hz };
        let rect = self.video_rect(video);
        let sx = f64::from(rect.w) / f64::from(video.width);
        let sy = f64::from(rect.h) / f64::from(video.height);
        let (vw, vh) = (f64::from(video.width), f64::from(video.height));
        (0..)
            .map(|i| (f64::from(i) * 1000.0 / hz).round())
            .take_while(|t| *t <= video.duration_ms as f64)
            .map(|t| {
                let (ex, ey) = eye_position(video, t - self.lag_ms);
                let jx = rng.random_range(-self.jitter_px..=self.jitter_px);
                let jy = rng.random_range(-self.jitter_px..=self.jitter_px);
                let (vx, vy) = ((ex + jx).clamp(0.0, vw - 1.0), (ey + jy).clamp(0.0, vh - 1.0));
                [t, f64::from(rect.x) + (vx + 0.5) * sx, f64::from(rect.y) + (vy + 0.5) * sy]
            })
            .collect()
    }

    /// The spoken clip, heard and written down.
    fn transcribe(&self, audio: &str) -> String {
        if self.spell_captcha {
            return audio.to_string();
        }
        audio
            .split_whitespace()
            .map(|w| SPOKEN.iter().position(|s| *s == w).map_or_else(|| w.to_string(), |d| d.to_string()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum DriveError {
    #[error("{method} {uri}: status {status}: {body}")]
    Status { method: Method, uri: String, status: StatusCode, body: String },
    #[error("{0}")]
    Protocol(String),
}

/// One request/response pair as seen on the wire.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub method: Method,
    pub uri: String,
    pub status: StatusCode,
    pub request: Option<Value>,
    pub response: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub session_id: String,
    pub final_state: String,
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn json_responses(&self) -> impl Iterator<Item = (&Exchange, Value)> {
        self.exchanges.iter().filter_map(|e| serde_json::from_slice(&e.response).ok().map(|v| (e, v)))
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let builder = Request::builder().method(method).uri(uri);
    let request = match &body {
        Some(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => builder.body(Body::empty()),
    }
    .expect("valid request");
    let response = app.clone().oneshot(request).await.expect("router is infallible");
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap_or_default();
    (status, bytes.to_vec())
}

struct Driver<'a> {
    app: &'a Router,
    transcript: Transcript,
}

impl Driver<'_> {
    async fn send(&mut self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let (status, bytes) = call(self.app, method.clone(), uri, body.clone()).await;
        self.transcript.exchanges.push(Exchange {
            method,
            uri: uri.to_string(),
            status,
            request: body,
            response: bytes.clone(),
        });
        (status, bytes)
    }

    async fn json(&mut self, method: Method, uri: &str, body: Option<Value>) -> Result<Value, DriveError> {
        let (status, bytes) = self.send(method.clone(), uri, body).await;
        if !status.is_success() {
            return Err(DriveError::Status {
                method,
                uri: uri.to_string(),
                status,
                body: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| DriveError::Protocol(format!("{uri}: {e}")))
    }

    async fn captcha(&mut self, viewer: &ScriptedViewer, id: &str, checkpoint: &str) -> Result<bool, DriveError> {
        let (status, audio) = self.send(Method::GET, &format!("/api/v1/session/{id}/captcha/{checkpoint}/audio"), None).await;
        if !status.is_success() {
            return Err(DriveError::Protocol(format!("captcha audio unavailable: {status}")));
        }
        let answer = viewer.transcribe(&String::from_utf8_lossy(&audio));
        let body = json!({ "checkpoint": checkpoint, "answer": answer });
        let reply = self.json(Method::POST, &format!("/api/v1/session/{id}/captcha"), Some(body)).await?;
        self.transcript.final_state = reply["state"].as_str().unwrap_or_default().to_string();
        Ok(reply["pass"].as_bool().unwrap_or(false))
    }
}

/// Runs one complete participant protocol against `app`. Returns early (with
/// the transcript so far) when the service rejects the participant.
pub async fn run_viewer(
    app: &Router,
    viewer: &ScriptedViewer,
    videos: &BTreeMap<String, VideoMeta>,
) -> Result<Transcript, DriveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(viewer.seed);
    let mut d = Driver { app, transcript: Transcript::default() };
    let body = json!({ "screen_w": viewer.screen_w, "screen_h": viewer.screen_h, "locale": viewer.locale });
    let (status, bytes) = d.send(Method::POST, "/api/v1/session", Some(body)).await;
    let created: CreateSessionResponse =
        serde_json::from_slice(&bytes).map_err(|e| DriveError::Protocol(format!("create session: {e} ({status})")))?;
    let id = created.session_id.clone();
    d.transcript.session_id = id.clone();
    d.transcript.final_state = created.state.clone();
    if status == StatusCode::FORBIDDEN {
        return Ok(d.transcript);
    }

    let attempts: Vec<Value> =
        viewer.reaction_samples(&created.reaction).into_iter().map(|s| json!({ "samples": s })).collect();
    let reply = d.json(Method::POST, &format!("/api/v1/session/{id}/reaction"), Some(json!({ "attempts": attempts }))).await?;
    d.transcript.final_state = reply["state"].as_str().unwrap_or_default().to_string();
    if reply["pass"] != Value::Bool(true) {
        return Ok(d.transcript);
    }
    if !d.captcha(viewer, &id, "start").await? {
        return Ok(d.transcript);
    }

    for (slot, VideoDescriptor { video_id, .. }) in created.playlist.iter().enumerate() {
        if viewer.stop_after == Some(slot) {
            break;
        }
        if slot == saliency_core::session::MIDDLE_CHECKPOINT && !d.captcha(viewer, &id, "middle").await? {
            return Ok(d.transcript);
        }
        let video = videos.get(video_id).ok_or_else(|| DriveError::Protocol(format!("unknown video {video_id}")))?;
        let body = json!({
            "video_id": video_id,
            "rating": rng.random_range(1..=5u8),
            "samples": viewer.view_samples(video, slot, &mut rng),
            "video_rect": viewer.video_rect(video),
        });
        let reply = d.json(Method::POST, &format!("/api/v1/session/{id}/view"), Some(body)).await?;
        d.transcript.final_state = reply["state"].as_str().unwrap_or_default().to_string();
    }
    Ok(d.transcript)
}
