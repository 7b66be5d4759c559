//! Protocol operations, independent of the HTTP layer.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::formats::{self, FormatError};
use saliency_core::qc::{self, QcError, RectTrajectory, SynonymTable, REACTION_ATTEMPTS, REACTION_THRESHOLD};
use saliency_core::session::{
    sample_playlist, Checkpoint, Operation, RejectReason, SessionError, SessionState, StoredView, ViewFlags,
    ViewerSession, DEFAULT_CAPTCHA_RETRIES,
};
use saliency_core::types::{CoordSpace, DisplayGeometry, MouseTrack, PipelineConfig, Rect, TrackSample, VideoMeta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{FileStore, SessionRecord, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session")]
    UnknownSession,
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid payload: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("catalog: {0}")]
    Catalog(String),
}

impl From<QcError> for ServiceError {
    fn from(e: QcError) -> Self {
        ServiceError::Invalid(e.to_string())
    }
}

/// One audio captcha: the clip the participant hears and its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptchaItem {
    pub id: String,
    pub answer: String,
    #[serde(default)]
    pub audio: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub seed: u64,
    pub captcha_retries: u32,
    pub captchas: Vec<CaptchaItem>,
    pub synonyms: SynonymTable,
    pub pipeline: PipelineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            captcha_retries: DEFAULT_CAPTCHA_RETRIES,
            captchas: Vec::new(),
            synonyms: SynonymTable::english_digits(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Videos the service can play, split into the content and validation pools.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub videos: BTreeMap<String, VideoMeta>,
    pub files: BTreeMap<String, PathBuf>,
    pub content: Vec<String>,
    pub validation: Vec<String>,
}

impl Catalog {
    pub fn new(videos: Vec<VideoMeta>, validation: &[String]) -> Result<Self, ServiceError> {
        let videos: BTreeMap<String, VideoMeta> = videos.into_iter().map(|v| (v.video_id.clone(), v)).collect();
        if let Some(missing) = validation.iter().find(|v| !videos.contains_key(*v)) {
            return Err(ServiceError::Catalog(format!("validation video {missing} not in metadata")));
        }
        let content = videos.keys().filter(|id| !validation.contains(id)).cloned().collect();
        let mut validation = validation.to_vec();
        validation.sort();
        validation.dedup();
        Ok(Self { videos, files: BTreeMap::new(), content, validation })
    }

    /// Indexes `DIR/<video_id>.<ext>` files for the video endpoint.
    pub fn with_files(mut self, dir: &Path) -> Result<Self, ServiceError> {
        let entries = std::fs::read_dir(dir).map_err(|e| ServiceError::Catalog(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::Catalog(e.to_string()))?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if path.is_file() && self.videos.contains_key(stem) {
                self.files.insert(stem.to_string(), path.clone());
            }
        }
        Ok(self)
    }

    /// Reads the metadata CSV and a validation list (one id per line).
    pub fn load(meta_csv: &Path, validation_list: Option<&Path>) -> Result<Self, ServiceError> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| ServiceError::Catalog(format!("{}: {e}", p.display())));
        let videos = formats::load_video_meta(&read(meta_csv)?).map_err(|e: FormatError| ServiceError::Catalog(e.to_string()))?;
        let validation: Vec<String> = match validation_list {
            Some(p) => String::from_utf8_lossy(&read(p)?).lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect(),
            None => Vec::new(),
        };
        Self::new(videos, &validation)
    }
}

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

/// Created session as the client sees it.
#[derive(Debug, Clone)]
pub struct Created {
    pub session: ViewerSession,
    pub trajectory: RectTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaptchaOutcome {
    pub pass: bool,
    pub retries_left: u32,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewOutcome {
    pub slot: usize,
    pub flags: ViewFlags,
    pub state: SessionState,
}

/// Raw view payload as uploaded by the client.
#[derive(Debug, Clone)]
pub struct ViewUpload {
    pub video_id: String,
    pub rating: u8,
    pub samples: Vec<[f64; 3]>,
    pub video_rect: Rect,
}

pub struct Service {
    config: ServiceConfig,
    catalog: Catalog,
    store: FileStore,
    clock: Clock,
    counter: AtomicU64,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn samples_from(raw: &[[f64; 3]]) -> Vec<TrackSample> {
    raw.iter().map(|[t, x, y]| TrackSample::new(*t, *x, *y)).collect()
}

impl Service {
    pub fn new(config: ServiceConfig, catalog: Catalog, store: FileStore, clock: Clock) -> Result<Self, ServiceError> {
        config.pipeline.validate().map_err(|e| ServiceError::Catalog(e.to_string()))?;
        let existing = store.session_ids()?.len() as u64;
        Ok(Self { config, catalog, store, clock, counter: AtomicU64::new(existing), locks: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &FileStore {
        &self.store
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    /// Runs `f` on the stored session under its lock and persists the
    /// result if `f` succeeded.
    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut SessionRecord, u64) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut record = match self.store.load(id) {
            Ok(Some(r)) => r,
            Ok(None) | Err(StoreError::BadId(_)) => return Err(ServiceError::UnknownSession),
            Err(e) => return Err(e.into()),
        };
        let before = record.clone();
        let out = f(&mut record, (self.clock)())?;
        if record != before {
            self.store.save(&record)?;
        }
        Ok(out)
    }

    /// The n-th session drawn from the service seed uses its own ChaCha
    /// stream, so playlists depend only on (seed, creation order).
    fn session_rng(&self) -> ChaCha8Rng {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(n);
        rng
    }

    pub fn create_session(&self, screen_w: u32, screen_h: u32, locale: &str) -> Result<Created, ServiceError> {
        let mut rng = self.session_rng();
        let session_id = hex::encode(rng.random::<[u8; 16]>());
        let viewer_id = format!("viewer_{}", hex::encode(rng.random::<[u8; 6]>()));
        let now = (self.clock)();
        let geometry = DisplayGeometry::new(screen_w, screen_h, Rect { x: 0, y: 0, w: screen_w, h: screen_h })
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let trajectory = RectTrajectory::for_screen(screen_w, screen_h);

        let screen_ok = qc::check_screen(&geometry, self.config.pipeline.min_screen);
        let playlist = if screen_ok {
            sample_playlist(&self.catalog.content, &self.catalog.validation, &mut rng)?
        } else {
            Vec::new()
        };
        let captchas = if self.config.captchas.is_empty() {
            [String::new(), String::new()]
        } else {
            let n = self.config.captchas.len();
            let first = rng.random_range(0..n);
            // distinct clips at the two checkpoints when the bank allows it
            let second = if n > 1 { (first + rng.random_range(1..n)) % n } else { first };
            [self.config.captchas[first].id.clone(), self.config.captchas[second].id.clone()]
        };
        let mut session = ViewerSession::new(session_id, viewer_id, geometry, locale, playlist, now);
        if !screen_ok {
            session.reject(RejectReason::ScreenTooSmall, now);
        }
        let record = SessionRecord { session, captchas };
        self.store.create(&record)?;
        tracing::info!(session = %record.session.session_id, state = %record.session.state, "session created");
        Ok(Created { session: record.session, trajectory })
    }

    pub fn session(&self, id: &str) -> Result<ViewerSession, ServiceError> {
        self.with_session(id, |r, _| Ok(r.session.clone()))
    }

    /// Scores the three laps against the trajectory issued for this screen.
    pub fn submit_reaction(&self, id: &str, attempts: &[Vec<[f64; 3]>]) -> Result<(bool, SessionState), ServiceError> {
        self.with_session(id, |r, now| {
            r.session.check(Operation::Reaction)?;
            if attempts.len() != REACTION_ATTEMPTS {
                return Err(ServiceError::Invalid(format!(
                    "expected {REACTION_ATTEMPTS} attempts, got {}",
                    attempts.len()
                )));
            }
            let g = r.session.geometry;
            let trajectory = RectTrajectory::for_screen(g.screen_w, g.screen_h);
            let attempts: Vec<qc::ReactionAttempt> = attempts
                .iter()
                .map(|a| qc::ReactionAttempt::new(trajectory, samples_from(a)))
                .collect::<Result<_, _>>()?;
            let outcome = qc::score_reaction_test(&attempts, REACTION_THRESHOLD)?;
            r.session.apply_reaction(attempts, outcome.best, outcome.pass, now)?;
            Ok((outcome.pass, r.session.state))
        })
    }

    fn captcha_answer(&self, item_id: &str) -> Option<&CaptchaItem> {
        self.config.captchas.iter().find(|c| c.id == item_id)
    }

    pub fn captcha_audio(&self, id: &str, checkpoint: Checkpoint) -> Result<Option<PathBuf>, ServiceError> {
        let item = self.with_session(id, |r, _| Ok(r.captchas[checkpoint.index()].clone()))?;
        Ok(self.captcha_answer(&item).and_then(|c| c.audio.clone()))
    }

    pub fn submit_captcha(&self, id: &str, checkpoint: Checkpoint, answer: &str) -> Result<CaptchaOutcome, ServiceError> {
        self.with_session(id, |r, now| {
            r.session.check(Operation::Captcha(checkpoint))?;
            let expected = self.captcha_answer(&r.captchas[checkpoint.index()]).map(|c| c.answer.as_str()).unwrap_or("");
            let synonyms = self.config.synonyms.for_locale(&r.session.locale);
            let pass = qc::verify_captcha(expected, answer, synonyms);
            let retries_left = r.session.apply_captcha(checkpoint, pass, self.config.captcha_retries, now)?;
            Ok(CaptchaOutcome { pass, retries_left, state: r.session.state })
        })
    }

    /// Validates and stores one upload. The frequency check only flags the
    /// view; a malformed track leaves the slot open.
    pub fn submit_view(&self, id: &str, upload: ViewUpload) -> Result<ViewOutcome, ServiceError> {
        self.with_session(id, |r, now| {
            let slot = r.session.check_view(&upload.video_id, upload.rating)?;
            let video = self
                .catalog
                .videos
                .get(&upload.video_id)
                .ok_or_else(|| ServiceError::UnknownVideo(upload.video_id.clone()))?;
            let g = r.session.geometry;
            let geometry = DisplayGeometry::new(g.screen_w, g.screen_h, upload.video_rect)
                .map_err(|e| ServiceError::Invalid(e.to_string()))?;
            geometry.check_aspect(video.width, video.height).map_err(|e| ServiceError::Invalid(e.to_string()))?;
            let track = MouseTrack::new(
                r.session.viewer_id.clone(),
                upload.video_id.clone(),
                CoordSpace::Screen,
                geometry,
                samples_from(&upload.samples),
            )
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
            let bytes = formats::save_track(&track).map_err(|e| ServiceError::Invalid(e.to_string()))?;
            let flags: ViewFlags = qc::check_view_frequency(&track, self.config.pipeline.min_track_hz).into();
            let view = StoredView {
                session_id: r.session.session_id.clone(),
                slot,
                video_id: upload.video_id.clone(),
                track: String::from_utf8(bytes).expect("track files are UTF-8"),
                rating: upload.rating,
                received_at: now,
                flags: flags.clone(),
            };
            self.store.write_view(&view)?;
            r.session.advance(now);
            Ok(ViewOutcome { slot, flags, state: r.session.state })
        })
    }

    pub fn video_file(&self, video_id: &str) -> Option<&Path> {
        self.catalog.files.get(video_id).map(PathBuf::as_path)
    }
}
