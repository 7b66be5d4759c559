//! Domain types shared by every stage: display geometry, video metadata,
//! cursor tracks, per-frame fixations and continuous saliency frames.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("screen must be at least 1x1, got {0}x{1}")]
    EmptyScreen(u32, u32),
    #[error("video rect {rect} does not fit inside a {screen_w}x{screen_h} screen")]
    RectOutsideScreen { rect: Rect, screen_w: u32, screen_h: u32 },
    #[error("video rect {rect} does not preserve the {video_w}x{video_h} aspect ratio")]
    AspectMismatch { rect: Rect, video_w: u32, video_h: u32 },
    #[error("video {0}: width, height, fps and duration must be positive")]
    DegenerateVideo(String),
    #[error("empty track")]
    EmptyTrack,
    #[error("non-monotone timestamp at sample {0}")]
    NonMonotone(usize),
    #[error("negative timestamp at sample {0}")]
    NegativeTime(usize),
    #[error("non-finite value at sample {0}")]
    NonFinite(usize),
    #[error("sample {index} at ({x}, {y}) is outside the {width}x{height} {space} space")]
    OutOfBounds { index: usize, x: f64, y: f64, width: u32, height: u32, space: &'static str },
    #[error("frame buffer holds {got} values, expected {width}x{height}")]
    FrameSize { width: usize, height: usize, got: usize },
    #[error("frame value at index {0} is negative or non-finite")]
    BadIntensity(usize),
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

/// Axis-aligned rectangle in integer screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.w, self.h, self.x, self.y)
    }
}

/// Participant screen and the rectangle the video occupied on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisplayGeometry {
    pub screen_w: u32,
    pub screen_h: u32,
    pub video_rect: Rect,
}

impl DisplayGeometry {
    pub fn new(screen_w: u32, screen_h: u32, video_rect: Rect) -> Result<Self, ValidationError> {
        if screen_w == 0 || screen_h == 0 {
            return Err(ValidationError::EmptyScreen(screen_w, screen_h));
        }
        let inside = u64::from(video_rect.x) + u64::from(video_rect.w) <= u64::from(screen_w)
            && u64::from(video_rect.y) + u64::from(video_rect.h) <= u64::from(screen_h);
        if !inside {
            return Err(ValidationError::RectOutsideScreen { rect: video_rect, screen_w, screen_h });
        }
        Ok(Self { screen_w, screen_h, video_rect })
    }

    /// Largest centered rectangle with the video's aspect ratio.
    pub fn fit(screen_w: u32, screen_h: u32, video_w: u32, video_h: u32) -> Result<Self, ValidationError> {
        if screen_w == 0 || screen_h == 0 {
            return Err(ValidationError::EmptyScreen(screen_w, screen_h));
        }
        let scale = f64::min(
            f64::from(screen_w) / f64::from(video_w),
            f64::from(screen_h) / f64::from(video_h),
        );
        let w = ((f64::from(video_w) * scale).round() as u32).clamp(1, screen_w);
        let h = ((f64::from(video_h) * scale).round() as u32).clamp(1, screen_h);
        let rect = Rect { x: (screen_w - w) / 2, y: (screen_h - h) / 2, w, h };
        Self::new(screen_w, screen_h, rect)
    }

    /// Checks that the rect reproduces the video aspect ratio within one pixel.
    pub fn check_aspect(&self, video_w: u32, video_h: u32) -> Result<(), ValidationError> {
        let r = self.video_rect;
        let expected_h = f64::from(r.w) * f64::from(video_h) / f64::from(video_w);
        let expected_w = f64::from(r.h) * f64::from(video_w) / f64::from(video_h);
        if (expected_h - f64::from(r.h)).abs() <= 1.0 || (expected_w - f64::from(r.w)).abs() <= 1.0 {
            Ok(())
        } else {
            Err(ValidationError::AspectMismatch { rect: r, video_w, video_h })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    PublicTest,
    PrivateTest,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::PublicTest => "public_test",
            Subset::PrivateTest => "private_test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Subset::Train),
            "public_test" => Some(Subset::PublicTest),
            "private_test" => Some(Subset::PrivateTest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub duration_ms: u64,
    pub has_audio: bool,
    pub subset: Subset,
}

impl VideoMeta {
    pub fn new(
        video_id: impl Into<String>,
        width: u32,
        height: u32,
        fps: f64,
        duration_ms: u64,
    ) -> Result<Self, ValidationError> {
        let meta = Self {
            video_id: video_id.into(),
            width,
            height,
            fps,
            duration_ms,
            has_audio: true,
            subset: Subset::Train,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.width == 0 || self.height == 0 || !(self.fps > 0.0) || !self.fps.is_finite() || self.duration_ms == 0 {
            return Err(ValidationError::DegenerateVideo(self.video_id.clone()));
        }
        Ok(())
    }

    pub fn frame_duration_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    /// Number of frames covering `duration_ms` of playback, `ceil(duration * fps)`.
    pub fn frames_for(&self, duration_ms: u64) -> usize {
        let exact = duration_ms as f64 * self.fps / 1000.0;
        // Guard against 539.9999999 style products of exact frame counts.
        (exact - 1e-9).ceil().max(0.0) as usize
    }

    pub fn frame_count(&self) -> usize {
        self.frames_for(self.duration_ms)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    /// Milliseconds since playback start.
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
}

impl TrackSample {
    pub fn new(t_ms: f64, x: f64, y: f64) -> Self {
        Self { t_ms, x, y }
    }
}

/// Coordinate space of a track. Video space carries the native frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoordSpace {
    Screen,
    Video { width: u32, height: u32 },
}

impl CoordSpace {
    pub fn name(&self) -> &'static str {
        match self {
            CoordSpace::Screen => "screen",
            CoordSpace::Video { .. } => "video",
        }
    }
}

/// One viewer's cursor samples for one video.
///
/// Tracks loaded from files or uploads are fully validated. Tracks produced by
/// pipeline stages keep every invariant except non-emptiness: shifting or
/// trimming may legitimately consume every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MouseTrack {
    pub viewer_id: String,
    pub video_id: String,
    pub space: CoordSpace,
    pub geometry: DisplayGeometry,
    pub samples: Vec<TrackSample>,
}

impl MouseTrack {
    pub fn new(
        viewer_id: impl Into<String>,
        video_id: impl Into<String>,
        space: CoordSpace,
        geometry: DisplayGeometry,
        samples: Vec<TrackSample>,
    ) -> Result<Self, ValidationError> {
        let track = Self {
            viewer_id: viewer_id.into(),
            video_id: video_id.into(),
            space,
            geometry,
            samples,
        };
        track.validate()?;
        Ok(track)
    }

    /// Bounds of the declared coordinate space as (width, height).
    pub fn bounds(&self) -> (u32, u32) {
        match self.space {
            CoordSpace::Screen => (self.geometry.screen_w, self.geometry.screen_h),
            CoordSpace::Video { width, height } => (width, height),
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.samples.is_empty() {
            return Err(ValidationError::EmptyTrack);
        }
        let (width, height) = self.bounds();
        let mut prev: Option<f64> = None;
        for (index, s) in self.samples.iter().enumerate() {
            if !(s.t_ms.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(ValidationError::NonFinite(index));
            }
            if s.t_ms < 0.0 {
                return Err(ValidationError::NegativeTime(index));
            }
            if prev.is_some_and(|p| s.t_ms <= p) {
                return Err(ValidationError::NonMonotone(index));
            }
            prev = Some(s.t_ms);
            // Browsers may report the far edge itself, so bounds are closed.
            if s.x < 0.0 || s.y < 0.0 || s.x > f64::from(width) || s.y > f64::from(height) {
                return Err(ValidationError::OutOfBounds {
                    index,
                    x: s.x,
                    y: s.y,
                    width,
                    height,
                    space: self.space.name(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn with_samples(&self, samples: Vec<TrackSample>) -> Self {
        Self {
            viewer_id: self.viewer_id.clone(),
            video_id: self.video_id.clone(),
            space: self.space,
            geometry: self.geometry,
            samples,
        }
    }
}

/// Fixation points of all viewers attributed to one frame, in native video pixels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameFixations {
    pub frame_index: usize,
    pub points: Vec<(u32, u32)>,
}

impl FrameFixations {
    pub fn new(frame_index: usize, points: Vec<(u32, u32)>) -> Self {
        Self { frame_index, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Row-major grid of nonnegative intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, ValidationError> {
        if values.len() != width * height {
            return Err(ValidationError::FrameSize { width, height, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ValidationError::BadIntensity(i));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel. The closure must
    /// return nonnegative finite values.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                debug_assert!(v.is_finite() && v >= 0.0);
                values.push(v);
            }
        }
        Self { width, height, values }
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Position of the first maximal value as (x, y).
    pub fn argmax(&self) -> Option<(usize, usize)> {
        if self.values.is_empty() {
            return None;
        }
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        Some((best % self.width, best / self.width))
    }

    /// Copy scaled so the maximum becomes 1. All-zero frames return `None`.
    pub fn normalized_to_unit_max(&self) -> Option<Self> {
        let max = self.max();
        if max <= 0.0 {
            return None;
        }
        let values = self.values.iter().map(|v| v / max).collect();
        Some(Self::from_raw(self.width, self.height, values))
    }

    /// Applies `f` to every value. `f` must keep values nonnegative and finite.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| f(*v)).collect();
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self::from_raw(self.width, self.height, values)
    }
}

/// Every tunable constant of the collection and ground-truth pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub resample_hz: f64,
    pub min_track_hz: f64,
    pub shift_ms: f64,
    pub trim_ms: f64,
    /// Rendering sigma on a 1920 px wide canvas.
    pub render_sigma_px: f64,
    /// Cursor-aperture blur sigma as a fraction of the participant screen width.
    pub blur_sigma_fraction: f64,
    pub validation_cc_threshold: f64,
    pub min_screen: (u32, u32),
}

/// Reference canvas width the rendering sigma is specified on.
pub const REFERENCE_WIDTH: f64 = 1920.0;
pub const REFERENCE_HEIGHT: f64 = 1080.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resample_hz: 100.0,
            min_track_hz: 3.0,
            shift_ms: 300.0,
            trim_ms: 1000.0,
            render_sigma_px: 38.4,
            blur_sigma_fraction: 0.02,
            validation_cc_threshold: 0.35,
            min_screen: (1280, 720),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let positive = [
            ("resample_hz", self.resample_hz),
            ("min_track_hz", self.min_track_hz),
            ("render_sigma_px", self.render_sigma_px),
            ("blur_sigma_fraction", self.blur_sigma_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ValidationError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("shift_ms", self.shift_ms), ("trim_ms", self.trim_ms)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ValidationError::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.blur_sigma_fraction > 0.2 {
            return Err(ValidationError::Config("blur_sigma_fraction must be in (0, 0.2]".into()));
        }
        if !(self.validation_cc_threshold > -1.0 && self.validation_cc_threshold < 1.0) {
            return Err(ValidationError::Config("validation_cc_threshold must be in (-1, 1)".into()));
        }
        if self.min_screen.0 == 0 || self.min_screen.1 == 0 {
            return Err(ValidationError::Config("min_screen must be positive".into()));
        }
        Ok(())
    }

    /// Rendering sigma for a video, scaled by its long side relative to 1920 px.
    pub fn sigma_for(&self, video: &VideoMeta) -> f64 {
        let long_side = f64::from(video.width.max(video.height));
        self.render_sigma_px * long_side / REFERENCE_WIDTH
    }

    /// Cursor-aperture blur sigma for a participant screen.
    pub fn blur_sigma_for(&self, screen_w: u32) -> f64 {
        self.blur_sigma_fraction * f64::from(screen_w)
    }

    /// Trimmed playback duration used for ground-truth frames.
    pub fn effective_duration_ms(&self, video: &VideoMeta) -> u64 {
        (video.duration_ms as f64 - self.trim_ms).max(0.0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> DisplayGeometry {
        DisplayGeometry::new(1920, 1080, Rect { x: 0, y: 0, w: 1920, h: 1080 }).unwrap()
    }

    #[test]
    fn rect_must_fit_screen() {
        let err = DisplayGeometry::new(1280, 720, Rect { x: 100, y: 0, w: 1280, h: 720 });
        assert!(matches!(err, Err(ValidationError::RectOutsideScreen { .. })));
    }

    #[test]
    fn fit_preserves_aspect() {
        let g = DisplayGeometry::fit(1920, 1200, 1920, 1080).unwrap();
        assert_eq!(g.video_rect, Rect { x: 0, y: 60, w: 1920, h: 1080 });
        // portrait video pillarboxed on a landscape screen
        let g = DisplayGeometry::fit(1920, 1080, 1080, 1920).unwrap();
        assert_eq!(g.video_rect.h, 1080);
        assert_eq!(g.video_rect.w, 608);
        assert_eq!(g.video_rect.x, (1920 - 608) / 2);
        g.check_aspect(1080, 1920).unwrap();
        assert!(g.check_aspect(1920, 1080).is_err());
    }

    #[test]
    fn track_rejects_repeated_timestamp() {
        let samples = vec![
            TrackSample::new(0.0, 0.0, 0.0),
            TrackSample::new(10.0, 1.0, 1.0),
            TrackSample::new(10.0, 2.0, 2.0),
        ];
        let err = MouseTrack::new("v", "vid", CoordSpace::Screen, geom(), samples).unwrap_err();
        assert_eq!(err.to_string(), "non-monotone timestamp at sample 2");
    }

    #[test]
    fn track_rejects_out_of_bounds() {
        let samples = vec![TrackSample::new(0.0, 1921.0, 0.0)];
        let err = MouseTrack::new("v", "vid", CoordSpace::Screen, geom(), samples).unwrap_err();
        assert!(matches!(err, ValidationError::OutOfBounds { index: 0, .. }));
        let err = MouseTrack::new("v", "vid", CoordSpace::Screen, geom(), vec![]).unwrap_err();
        assert_eq!(err, ValidationError::EmptyTrack);
    }

    #[test]
    fn frame_counts() {
        let v = VideoMeta::new("a", 1920, 1080, 30.0, 19_000).unwrap();
        assert_eq!(v.frame_count(), 570);
        assert_eq!(v.frames_for(18_000), 540);
        assert_eq!(v.frames_for(18_001), 541);
        assert!(VideoMeta::new("b", 0, 1080, 30.0, 1).is_err());
    }

    #[test]
    fn config_defaults_and_sigma_scaling() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let full = VideoMeta::new("a", 1920, 1080, 30.0, 1000).unwrap();
        let small = VideoMeta::new("b", 480, 270, 30.0, 1000).unwrap();
        let portrait = VideoMeta::new("c", 1080, 1920, 30.0, 1000).unwrap();
        assert_eq!(c.sigma_for(&full), 38.4);
        assert!((c.sigma_for(&small) - 9.6).abs() < 1e-12);
        assert_eq!(c.sigma_for(&portrait), 38.4);
        assert!((c.blur_sigma_for(1920) - 38.4).abs() < 1e-12);
        assert!((c.blur_sigma_for(1280) - 25.6).abs() < 1e-12);
        let bad = PipelineConfig { blur_sigma_fraction: 0.3, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig { validation_cc_threshold: 1.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frame_rejects_negative() {
        assert!(SaliencyFrame::new(2, 1, vec![0.0, -1.0]).is_err());
        assert!(SaliencyFrame::new(2, 1, vec![0.0]).is_err());
        let f = SaliencyFrame::new(2, 2, vec![0.0, 3.0, 1.0, 3.0]).unwrap();
        assert_eq!(f.argmax(), Some((1, 0)));
        assert_eq!(f.normalized_to_unit_max().unwrap().values(), &[0.0, 1.0, 1.0 / 3.0, 1.0]);
    }
}
