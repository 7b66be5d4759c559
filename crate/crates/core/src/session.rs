//! Participant session model and its protocol state machine.
//!
//! ```text
//! created → reaction_passed → captcha1_passed → viewing(0..12)
//!         → captcha2_pending → captcha2_passed → viewing(12..23) → finalized
//! ```
//!
//! Any state other than `finalized` can fall into `rejected`.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qc::ReactionAttempt;
use crate::types::DisplayGeometry;

pub const PLAYLIST_LEN: usize = 23;
pub const VALIDATION_COUNT: usize = 3;
pub const CONTENT_COUNT: usize = PLAYLIST_LEN - VALIDATION_COUNT;
/// Uploads for slots at or past this index require the middle captcha.
pub const MIDDLE_CHECKPOINT: usize = 12;
pub const DEFAULT_CAPTCHA_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    Start,
    Middle,
}

impl Checkpoint {
    pub fn index(self) -> usize {
        match self {
            Checkpoint::Start => 0,
            Checkpoint::Middle => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ScreenTooSmall,
    ReactionFailed,
    CaptchaFailed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::ScreenTooSmall => "screen_too_small",
            RejectReason::ReactionFailed => "reaction_failed",
            RejectReason::CaptchaFailed => "captcha_failed",
        }
    }
}

/// Protocol position. `Viewing { next }` covers both viewing phases; the
/// slot index tells them apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Created,
    ReactionPassed,
    Viewing { next: usize },
    Captcha2Pending,
    Finalized,
    Rejected { reason: RejectReason },
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Created => "created",
            SessionState::ReactionPassed => "reaction_passed",
            SessionState::Viewing { next: 0 } => "captcha1_passed",
            SessionState::Viewing { next: MIDDLE_CHECKPOINT } => "captcha2_passed",
            SessionState::Viewing { .. } => "viewing",
            SessionState::Captcha2Pending => "captcha2_pending",
            SessionState::Finalized => "finalized",
            SessionState::Rejected { .. } => "rejected",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionState::Viewing { next } => write!(f, "{} (slot {next})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operation {
    Reaction,
    Captcha(Checkpoint),
    View,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Reaction => f.write_str("reaction"),
            Operation::Captcha(Checkpoint::Start) => f.write_str("captcha(start)"),
            Operation::Captcha(Checkpoint::Middle) => f.write_str("captcha(middle)"),
            Operation::View => f.write_str("view"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{op} not allowed in state {state}")]
    Protocol { op: Operation, state: String },
    #[error("expected video {expected} for slot {slot}, got {found}")]
    OutOfOrder { slot: usize, expected: String, found: String },
    #[error("video {video_id} already uploaded")]
    Duplicate { video_id: String },
    #[error("rating must be 1..=5, got {0}")]
    BadRating(u8),
    #[error("need {needed} {kind} videos, pool has {available}")]
    PoolTooSmall { kind: &'static str, needed: usize, available: usize },
    #[error("video {0} appears in both pools")]
    PoolOverlap(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaylistEntry {
    pub video_id: String,
    pub is_validation: bool,
}

/// Samples `CONTENT_COUNT` content videos uniformly without replacement and
/// `VALIDATION_COUNT` validation videos, placing the latter at random slots.
pub fn sample_playlist<R: Rng + ?Sized>(
    content_pool: &[String],
    validation_pool: &[String],
    rng: &mut R,
) -> Result<Vec<PlaylistEntry>, SessionError> {
    if content_pool.len() < CONTENT_COUNT {
        return Err(SessionError::PoolTooSmall { kind: "content", needed: CONTENT_COUNT, available: content_pool.len() });
    }
    if validation_pool.len() < VALIDATION_COUNT {
        return Err(SessionError::PoolTooSmall {
            kind: "validation",
            needed: VALIDATION_COUNT,
            available: validation_pool.len(),
        });
    }
    if let Some(v) = validation_pool.iter().find(|v| content_pool.contains(v)) {
        return Err(SessionError::PoolOverlap(v.clone()));
    }
    let mut content = index::sample(rng, content_pool.len(), CONTENT_COUNT).into_iter().map(|i| &content_pool[i]);
    let mut validation =
        index::sample(rng, validation_pool.len(), VALIDATION_COUNT).into_iter().map(|i| &validation_pool[i]);
    let slots = index::sample(rng, PLAYLIST_LEN, VALIDATION_COUNT).into_vec();
    let playlist = (0..PLAYLIST_LEN)
        .map(|slot| {
            let is_validation = slots.contains(&slot);
            let id = if is_validation { validation.next() } else { content.next() };
            PlaylistEntry { video_id: id.expect("pools sized above").clone(), is_validation }
        })
        .collect();
    Ok(playlist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewerSession {
    pub session_id: String,
    pub viewer_id: String,
    pub geometry: DisplayGeometry,
    pub locale: String,
    pub playlist: Vec<PlaylistEntry>,
    pub state: SessionState,
    /// Attempts as submitted, kept for offline re-scoring.
    pub reaction_attempts: Vec<ReactionAttempt>,
    pub reaction_best: Option<f64>,
    pub captcha_passed: [bool; 2],
    pub captcha_failures: [u32; 2],
    pub created_at: u64,
    pub updated_at: u64,
}

impl ViewerSession {
    pub fn new(
        session_id: impl Into<String>,
        viewer_id: impl Into<String>,
        geometry: DisplayGeometry,
        locale: impl Into<String>,
        playlist: Vec<PlaylistEntry>,
        now: u64,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            viewer_id: viewer_id.into(),
            geometry,
            locale: locale.into(),
            playlist,
            state: SessionState::Created,
            reaction_attempts: Vec::new(),
            reaction_best: None,
            captcha_passed: [false; 2],
            captcha_failures: [0; 2],
            created_at: now,
            updated_at: now,
        }
    }

    /// Number of slots already uploaded.
    pub fn cursor(&self) -> usize {
        match self.state {
            SessionState::Viewing { next } => next,
            SessionState::Captcha2Pending => MIDDLE_CHECKPOINT,
            SessionState::Finalized => self.playlist.len(),
            _ => 0,
        }
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self.state, SessionState::Rejected { .. })
    }

    pub fn check(&self, op: Operation) -> Result<(), SessionError> {
        let ok = matches!(
            (self.state, op),
            (SessionState::Created, Operation::Reaction)
                | (SessionState::ReactionPassed, Operation::Captcha(Checkpoint::Start))
                | (SessionState::Captcha2Pending, Operation::Captcha(Checkpoint::Middle))
                | (SessionState::Viewing { .. }, Operation::View)
        );
        if ok {
            Ok(())
        } else {
            Err(SessionError::Protocol { op, state: self.state.to_string() })
        }
    }

    pub fn reject(&mut self, reason: RejectReason, now: u64) {
        self.state = SessionState::Rejected { reason };
        self.updated_at = now;
    }

    pub fn apply_reaction(&mut self, attempts: Vec<ReactionAttempt>, best: f64, pass: bool, now: u64) -> Result<(), SessionError> {
        self.check(Operation::Reaction)?;
        self.reaction_attempts = attempts;
        self.reaction_best = Some(best);
        self.updated_at = now;
        if pass {
            self.state = SessionState::ReactionPassed;
        } else {
            self.reject(RejectReason::ReactionFailed, now);
        }
        Ok(())
    }

    /// Records a captcha answer; returns the remaining retries. Running out
    /// of retries rejects the session.
    pub fn apply_captcha(&mut self, checkpoint: Checkpoint, pass: bool, budget: u32, now: u64) -> Result<u32, SessionError> {
        self.check(Operation::Captcha(checkpoint))?;
        let i = checkpoint.index();
        self.updated_at = now;
        if pass {
            self.captcha_passed[i] = true;
            self.state = SessionState::Viewing {
                next: match checkpoint {
                    Checkpoint::Start => 0,
                    Checkpoint::Middle => MIDDLE_CHECKPOINT,
                },
            };
            return Ok(budget.saturating_sub(self.captcha_failures[i]));
        }
        self.captcha_failures[i] += 1;
        let left = budget.saturating_sub(self.captcha_failures[i]);
        if left == 0 {
            self.reject(RejectReason::CaptchaFailed, now);
        }
        Ok(left)
    }

    /// Validates an upload against the cursor without changing state.
    pub fn check_view(&self, video_id: &str, rating: u8) -> Result<usize, SessionError> {
        self.check(Operation::View)?;
        let slot = self.cursor();
        let expected = &self.playlist[slot].video_id;
        if expected != video_id {
            if self.playlist[..slot].iter().any(|e| e.video_id == video_id) {
                return Err(SessionError::Duplicate { video_id: video_id.to_string() });
            }
            return Err(SessionError::OutOfOrder { slot, expected: expected.clone(), found: video_id.to_string() });
        }
        if !(1..=5).contains(&rating) {
            return Err(SessionError::BadRating(rating));
        }
        Ok(slot)
    }

    /// Advances past a stored upload.
    pub fn advance(&mut self, now: u64) {
        let next = self.cursor() + 1;
        self.updated_at = now;
        self.state = if next >= self.playlist.len() {
            SessionState::Finalized
        } else if next == MIDDLE_CHECKPOINT && !self.captcha_passed[1] {
            SessionState::Captcha2Pending
        } else {
            SessionState::Viewing { next }
        };
    }

    /// Restores the cursor from the number of stored views present on disk.
    pub fn reconcile(&mut self, stored: usize) {
        if let SessionState::Viewing { .. } | SessionState::Captcha2Pending | SessionState::Finalized = self.state {
            let stored = stored.min(self.playlist.len());
            self.state = if stored >= self.playlist.len() {
                SessionState::Finalized
            } else if stored >= MIDDLE_CHECKPOINT && !self.captcha_passed[1] {
                SessionState::Captcha2Pending
            } else {
                SessionState::Viewing { next: stored }
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFlags {
    pub frequency_hz: f64,
    pub frequency_ok: bool,
}

/// One uploaded view: the track in the track-file format plus its rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredView {
    pub session_id: String,
    pub slot: usize,
    pub video_id: String,
    pub track: String,
    pub rating: u8,
    pub received_at: u64,
    pub flags: ViewFlags,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Rect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pools() -> (Vec<String>, Vec<String>) {
        ((0..40).map(|i| format!("c{i:02}")).collect(), (0..3).map(|i| format!("v{i}")).collect())
    }

    fn session() -> ViewerSession {
        let (c, v) = pools();
        let playlist = sample_playlist(&c, &v, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let g = DisplayGeometry::new(1920, 1080, Rect { x: 0, y: 0, w: 1920, h: 1080 }).unwrap();
        ViewerSession::new("s", "viewer", g, "en", playlist, 0)
    }

    #[test]
    fn playlist_composition() {
        let (c, v) = pools();
        let p = sample_playlist(&c, &v, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(p.len(), PLAYLIST_LEN);
        assert_eq!(p.iter().filter(|e| e.is_validation).count(), VALIDATION_COUNT);
        let mut ids: Vec<&str> = p.iter().map(|e| e.video_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), PLAYLIST_LEN);
        let again = sample_playlist(&c, &v, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(p, again);
        let other = sample_playlist(&c, &v, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_ne!(p, other);
    }

    #[test]
    fn small_or_overlapping_pools_are_refused() {
        let (c, v) = pools();
        assert!(matches!(
            sample_playlist(&c[..19], &v, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(SessionError::PoolTooSmall { kind: "content", .. })
        ));
        let mut overlapping = v.clone();
        overlapping[0] = c[3].clone();
        assert!(matches!(
            sample_playlist(&c, &overlapping, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(SessionError::PoolOverlap(_))
        ));
    }

    #[test]
    fn full_protocol_walk() {
        let mut s = session();
        s.apply_reaction(Vec::new(), 0.5, true, 1).unwrap();
        assert_eq!(s.state.name(), "reaction_passed");
        assert_eq!(s.apply_captcha(Checkpoint::Start, true, 2, 2).unwrap(), 2);
        assert_eq!(s.state.name(), "captcha1_passed");
        for slot in 0..PLAYLIST_LEN {
            if slot == MIDDLE_CHECKPOINT {
                assert_eq!(s.state, SessionState::Captcha2Pending);
                let id = s.playlist[slot].video_id.clone();
                assert!(matches!(s.check_view(&id, 3), Err(SessionError::Protocol { .. })));
                assert_eq!(s.apply_captcha(Checkpoint::Middle, false, 2, 3).unwrap(), 1);
                assert_eq!(s.apply_captcha(Checkpoint::Middle, true, 2, 3).unwrap(), 1);
                assert_eq!(s.state.name(), "captcha2_passed");
            }
            let id = s.playlist[slot].video_id.clone();
            assert_eq!(s.check_view(&id, 4).unwrap(), slot);
            s.advance(10);
        }
        assert_eq!(s.state, SessionState::Finalized);
        assert!(s.check(Operation::View).is_err());
    }

    #[test]
    fn upload_checks() {
        let mut s = session();
        s.apply_reaction(Vec::new(), 0.5, true, 1).unwrap();
        s.apply_captcha(Checkpoint::Start, true, 2, 2).unwrap();
        let first = s.playlist[0].video_id.clone();
        let second = s.playlist[1].video_id.clone();
        assert!(matches!(s.check_view(&second, 3), Err(SessionError::OutOfOrder { slot: 0, .. })));
        assert_eq!(s.check_view(&first, 0), Err(SessionError::BadRating(0)));
        assert_eq!(s.check_view(&first, 6), Err(SessionError::BadRating(6)));
        s.advance(3);
        assert!(matches!(s.check_view(&first, 3), Err(SessionError::Duplicate { .. })));
    }

    #[test]
    fn failures_reject() {
        let mut s = session();
        s.apply_reaction(Vec::new(), 0.1, false, 1).unwrap();
        assert_eq!(s.state, SessionState::Rejected { reason: RejectReason::ReactionFailed });
        assert!(s.apply_reaction(Vec::new(), 0.9, true, 1).is_err());

        let mut s = session();
        s.apply_reaction(Vec::new(), 0.5, true, 1).unwrap();
        assert_eq!(s.apply_captcha(Checkpoint::Start, false, 2, 2).unwrap(), 1);
        assert_eq!(s.apply_captcha(Checkpoint::Start, false, 2, 2).unwrap(), 0);
        assert_eq!(s.state, SessionState::Rejected { reason: RejectReason::CaptchaFailed });
        assert!(s.check(Operation::View).is_err());
    }

    #[test]
    fn reconcile_restores_cursor() {
        let mut s = session();
        s.state = SessionState::Viewing { next: 0 };
        s.captcha_passed[0] = true;
        s.reconcile(5);
        assert_eq!(s.cursor(), 5);
        s.reconcile(12);
        assert_eq!(s.state, SessionState::Captcha2Pending);
        s.captcha_passed[1] = true;
        s.reconcile(23);
        assert_eq!(s.state, SessionState::Finalized);
    }

    #[test]
    fn state_serializes_with_tag() {
        let json = serde_json::to_string(&SessionState::Viewing { next: 4 }).unwrap();
        assert_eq!(json, r#"{"state":"viewing","next":4}"#);
        let back: SessionState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SessionState::Viewing { next: 4 });
    }
}
