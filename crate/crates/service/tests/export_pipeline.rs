mod common;

use std::collections::BTreeMap;

use common::fixture;
use saliency_core::formats::{self, FrameSequence};
use saliency_core::pipeline::build_ground_truth;
use saliency_core::qc::{qc_session, QcReport};
use saliency_core::session::ViewerSession;
use saliency_core::types::PipelineConfig;
use saliency_service::export::read_manifest;
use saliency_service::synthetic::{eye_position, reference_maps, run_viewer, ScriptedViewer};
use saliency_service::{export_views, ExportFilter};

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn export_qc_ground_truth() {
    let f = fixture(21);
    let videos = f.corpus.meta();
    let config = PipelineConfig::default();

    let mut viewers: Vec<ScriptedViewer> = (1..=3).map(ScriptedViewer::new).collect();
    viewers[1].slow_slots = vec![0, 1];
    let mut wanderer = ScriptedViewer::new(4);
    wanderer.jitter_px = 70.0;
    viewers.push(wanderer);
    let mut sessions = Vec::new();
    for v in &viewers {
        let t = run_viewer(&f.app, v, &videos).await.unwrap();
        assert_eq!(t.final_state, "finalized");
        sessions.push(t.session_id);
    }

    let out_all = f.dir.path().join("export_all");
    let summary = export_views(f.service.store(), &out_all, ExportFilter::All).unwrap();
    assert_eq!((summary.sessions, summary.tracks), (4, 92));
    let manifest = read_manifest(&summary.manifest).unwrap();
    assert_eq!(manifest.iter().filter(|r| r.is_validation).count(), 12);
    assert!(manifest.windows(2).all(|w| (&w[0].session_id, w[0].slot) < (&w[1].session_id, w[1].slot)));
    // deterministic: a second export is byte-identical
    let again = f.dir.path().join("export_again");
    export_views(f.service.store(), &again, ExportFilter::All).unwrap();
    assert_eq!(std::fs::read(&summary.manifest).unwrap(), std::fs::read(again.join("manifest.csv")).unwrap());

    let references: BTreeMap<String, Box<dyn FrameSequence>> = f
        .corpus
        .validation
        .iter()
        .map(|id| (id.clone(), Box::new(reference_maps(&videos[id], &config).unwrap()) as Box<dyn FrameSequence>))
        .collect();
    let mut reports = BTreeMap::new();
    for id in &sessions {
        let bytes = std::fs::read(out_all.join("sessions").join(format!("{id}.json"))).unwrap();
        let session: ViewerSession = serde_json::from_slice(&bytes).unwrap();
        let views = f.service.store().views(id).unwrap();
        let report: QcReport = qc_session(&session, &views, &videos, &references, &config).unwrap();
        reports.insert(id.clone(), report);
    }
    let passed: Vec<bool> = sessions.iter().map(|id| reports[id].overall_pass).collect();
    assert_eq!(passed, [true, true, true, false], "{reports:#?}");
    let wander = &reports[&sessions[3]];
    assert!(wander.reaction_ok && wander.captcha_ok == [true, true] && !wander.validation_ok);
    for id in &sessions[..3] {
        assert!(reports[id].validation.iter().all(|v| v.mean_cc.unwrap() > 0.6), "{:?}", reports[id].validation);
    }

    let out = f.dir.path().join("export_qc");
    let summary = export_views(f.service.store(), &out, ExportFilter::QcPassed(&reports)).unwrap();
    // three passing viewers, 20 content views each, minus the slow content uploads
    let slow_session = f.service.session(&sessions[1]).unwrap();
    let slow_content = [0, 1].iter().filter(|s| !slow_session.playlist[**s].is_validation).count();
    assert_eq!(summary.tracks, 60 - slow_content);
    let manifest = read_manifest(&summary.manifest).unwrap();
    assert!(manifest.iter().all(|r| !r.is_validation && r.frequency_ok));

    let mut by_video: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for row in &manifest {
        let track = formats::load_track(&std::fs::read(out.join(&row.track_path)).unwrap()).unwrap();
        by_video.entry(row.video_id.clone()).or_default().push(track);
    }
    assert_eq!(by_video.len(), 20);
    let mut checked = 0;
    for (id, tracks) in &by_video {
        let video = &videos[id];
        let gt = build_ground_truth(video, tracks, &config).unwrap();
        assert_eq!(gt.frame_count(), 30);
        for i in [3, 12, 25] {
            let map = gt.render_frame(i);
            let (ax, ay) = map.argmax().unwrap();
            // frame i spans trimmed time [100 i, 100 i + 100), stimulus time + 1000 ms
            let (ex, ey) = eye_position(video, 1000.0 + 100.0 * i as f64 + 50.0);
            let d = ((ax as f64 - ex).powi(2) + (ay as f64 - ey).powi(2)).sqrt();
            assert!(d <= 8.0, "{id} frame {i}: argmax ({ax},{ay}) vs eye ({ex:.1},{ey:.1})");
            checked += 1;
        }
    }
    assert_eq!(checked, 60);
}
