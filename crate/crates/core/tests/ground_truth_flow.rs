use saliency_core::formats::{self, FrameSequence, PngDir};
use saliency_core::metrics::evaluate_video;
use saliency_core::pipeline::build_ground_truth;
use saliency_core::types::{PipelineConfig, SaliencyFrame, VideoMeta};

/// Cursor parked at one screen point for `duration` ms at 50 Hz.
fn parked_track(viewer: &str, x: f64, y: f64, duration: u32) -> Vec<u8> {
    let mut text = format!("{viewer},clip,screen,1920,1080,0,0,1920,1080\n");
    for t in (0..duration).step_by(20) {
        text.push_str(&format!("{t},{x},{y}\n"));
    }
    text.into_bytes()
}

#[test]
fn track_files_to_scores() {
    let video = VideoMeta::new("clip", 640, 360, 10.0, 3000).unwrap();
    let config = PipelineConfig::default();
    let tracks = vec![
        formats::load_track(&parked_track("viewer_a", 960.0, 540.0, 3000)).unwrap(),
        formats::load_track(&parked_track("viewer_b", 480.0, 270.0, 3000)).unwrap(),
    ];
    let gt = build_ground_truth(&video, &tracks, &config).unwrap();
    // 2000 ms remain after the trim
    assert_eq!(gt.frame_count(), 20);
    assert_eq!((gt.usable_views, gt.dropped_views), (2, 0));
    // last sample 2980 ms, minus shift and trim: 1680 ms, inside frame 16
    for f in &gt.fixations {
        if f.frame_index <= 16 {
            let mut pts = f.points.clone();
            pts.dedup();
            assert!(pts.contains(&(320, 180)) && pts.contains(&(160, 90)), "frame {}: {:?}", f.frame_index, f.points);
        } else {
            assert!(f.points.is_empty(), "frame {}", f.frame_index);
        }
    }
    let m = gt.render_frame(5);
    let (ax, ay) = m.argmax().unwrap();
    assert!([(320, 180), (160, 90)].contains(&(ax, ay)));

    // on disk and back
    let dir = tempfile::tempdir().unwrap();
    let maps_dir = dir.path().join("maps");
    std::fs::create_dir_all(&maps_dir).unwrap();
    for i in 0..gt.frame_count() {
        std::fs::write(PngDir::frame_path(&maps_dir, i), formats::save_saliency_frame(&gt.render_frame(i)).unwrap()).unwrap();
    }
    let fix_bytes = formats::save_fixations(&gt.fixations);
    let maps = PngDir::open(&maps_dir).unwrap();
    let fixations = formats::load_fixations(&fix_bytes, maps.len()).unwrap();
    assert_eq!(fixations, gt.fixations);

    let perfect = evaluate_video("clip", &maps, &maps, &fixations).unwrap();
    assert_eq!(perfect.skipped, [3, 3, 3, 3]);
    assert!((perfect.means[1].unwrap() - 1.0).abs() < 1e-12);
    assert!((perfect.means[2].unwrap() - 1.0).abs() < 1e-9);

    // a blob on only one of the two viewers scores lower on every metric
    let one_viewer = build_ground_truth(&video, &tracks[..1], &config).unwrap();
    let partial: Vec<SaliencyFrame> = one_viewer.render_all();
    let worse = evaluate_video("clip", &partial, &maps, &fixations).unwrap();
    for k in 0..4 {
        assert!(worse.means[k].unwrap() < perfect.means[k].unwrap(), "metric {k}: {:?} vs {:?}", worse.means, perfect.means);
    }
    // half-size predictions are resized to the ground truth
    let small: Vec<SaliencyFrame> = (0..gt.frame_count())
        .map(|i| {
            let full = gt.render_frame(i);
            SaliencyFrame::from_fn(320, 180, |x, y| full.get(2 * x, 2 * y))
        })
        .collect();
    let resized = evaluate_video("clip", &small, &maps, &fixations).unwrap();
    assert!(resized.means[1].unwrap() > 0.95);
}
