#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::http::{Method, StatusCode};
use axum::Router;
use saliency_service::synthetic::{call, CorpusSpec, ScriptedViewer, SyntheticCorpus};
use saliency_service::{Catalog, FileStore, Service, ServiceConfig};
use serde_json::{json, Value};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: SyntheticCorpus,
    pub service: Arc<Service>,
    pub app: Router,
}

/// Clock advancing one second per reading.
pub fn ticking_clock() -> saliency_service::Clock {
    let t = Arc::new(AtomicU64::new(1_700_000_000_000));
    Arc::new(move || t.fetch_add(1000, Ordering::SeqCst))
}

pub fn fixture_with(seed: u64, tweak: impl FnOnce(&mut ServiceConfig)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = SyntheticCorpus::new(&CorpusSpec::default());
    corpus.write_captcha_audio(&dir.path().join("captcha")).unwrap();
    let catalog = Catalog::new(corpus.videos.clone(), &corpus.validation).unwrap();
    let mut config = ServiceConfig { seed, captchas: corpus.captchas.clone(), ..ServiceConfig::default() };
    tweak(&mut config);
    let store = FileStore::open(dir.path().join("store")).unwrap();
    let service = Arc::new(Service::new(config, catalog, store, ticking_clock()).unwrap());
    let app = saliency_service::router(service.clone());
    Fixture { dir, corpus, service, app }
}

pub fn fixture(seed: u64) -> Fixture {
    fixture_with(seed, |_| {})
}

impl Fixture {
    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let (status, bytes) = call(&self.app, Method::POST, uri, Some(body)).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (status, bytes) = call(&self.app, Method::GET, uri, None).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    pub async fn create(&self) -> Value {
        let (status, body) = self.post("/api/v1/session", json!({"screen_w": 1920, "screen_h": 1080, "locale": "en"})).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body
    }

    pub async fn state(&self, id: &str) -> String {
        let (_, body) = self.get(&format!("/api/v1/session/{id}")).await;
        body["state"].as_str().unwrap().to_string()
    }

    pub fn answer(&self, id: &str, checkpoint: usize) -> String {
        let record = self.service.store().load(id).unwrap().unwrap();
        let item = &record.captchas[checkpoint];
        self.corpus.captchas.iter().find(|c| &c.id == item).unwrap().answer.clone()
    }

    pub fn reaction_body(&self, follow: bool) -> Value {
        let mut viewer = ScriptedViewer::new(1);
        viewer.follow_reaction = follow;
        let trajectory = saliency_core::qc::RectTrajectory::for_screen(1920, 1080);
        let attempts: Vec<Value> = viewer.reaction_samples(&trajectory).into_iter().map(|s| json!({"samples": s})).collect();
        json!({ "attempts": attempts })
    }

    pub async fn react(&self, id: &str, follow: bool) -> (StatusCode, Value) {
        self.post(&format!("/api/v1/session/{id}/reaction"), self.reaction_body(follow)).await
    }

    pub async fn captcha(&self, id: &str, checkpoint: &str, answer: &str) -> (StatusCode, Value) {
        self.post(&format!("/api/v1/session/{id}/captcha"), json!({"checkpoint": checkpoint, "answer": answer})).await
    }

    pub fn view_body(&self, created: &Value, slot: usize, hz: f64) -> Value {
        let video_id = created["playlist"][slot]["video_id"].as_str().unwrap();
        let video = self.corpus.video(video_id).unwrap();
        let mut viewer = ScriptedViewer::new(7);
        viewer.sample_hz = hz;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(slot as u64);
        json!({
            "video_id": video_id,
            "rating": 1 + slot % 5,
            "samples": viewer.view_samples(video, slot, &mut rng),
            "video_rect": viewer.video_rect(video),
        })
    }

    pub async fn view(&self, created: &Value, slot: usize) -> (StatusCode, Value) {
        let id = created["session_id"].as_str().unwrap();
        self.post(&format!("/api/v1/session/{id}/view"), self.view_body(created, slot, 60.0)).await
    }

    /// Reaction plus start captcha.
    pub async fn to_viewing(&self, created: &Value) {
        let id = created["session_id"].as_str().unwrap();
        assert_eq!(self.react(id, true).await.0, StatusCode::OK);
        let (status, body) = self.captcha(id, "start", &self.answer(id, 0)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["pass"], true);
    }

    pub async fn upload_range(&self, created: &Value, slots: std::ops::Range<usize>) {
        for slot in slots {
            let (status, body) = self.view(created, slot).await;
            assert_eq!(status, StatusCode::OK, "slot {slot}: {body}");
        }
    }
}
