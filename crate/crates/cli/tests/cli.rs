use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use saliency_core::formats;
use saliency_core::leaderboard::{read_scores_csv, VideoScoreRow};
use saliency_core::split::DatasetSplit;
use saliency_core::types::{PipelineConfig, VideoMeta};
use saliency_service::synthetic::reference_maps;
use tempfile::TempDir;

fn saliency(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saliency"))
        .args(args)
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = saliency(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One shared e2e run (seed 5) for the tests that consume its artifacts.
fn shared_run() -> &'static Path {
    static RUN: OnceLock<TempDir> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(&["--seed", "5", "e2e", "--out", p(&dir.path().join("run"))]);
        dir
    })
    .path()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn e2e_is_reproducible_and_seed_sensitive() {
    let first = shared_run().join("run");
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again");
    let other = dir.path().join("other");
    ok(&["--seed", "5", "e2e", "--out", p(&again)]);
    ok(&["--seed", "6", "--jobs", "1", "e2e", "--out", p(&other)]);

    let manifest = String::from_utf8(read(&first.join("manifest.sha256"))).unwrap();
    assert_eq!(manifest, String::from_utf8(read(&again.join("manifest.sha256"))).unwrap());
    assert_ne!(manifest, String::from_utf8(read(&other.join("manifest.sha256"))).unwrap());

    // every artifact stage is listed and the hashes are real
    for prefix in ["corpus/", "store/sessions/", "export_all/manifest.csv", "qc/report.csv", "export/tracks/", "gt/", "split.json", "baseline/prior.json", "submissions/center_prior/", "scores/oracle.csv", "leaderboard.csv"] {
        assert!(manifest.lines().any(|l| l[66..].starts_with(prefix)), "{prefix} missing from manifest");
    }
    let listed: Vec<&str> = manifest.lines().map(|l| &l[66..]).collect();
    assert!(listed.windows(2).all(|w| w[0] < w[1]));
    let line = manifest.lines().find(|l| l.ends_with("  leaderboard.csv")).unwrap();
    let digest = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(read(&first.join("leaderboard.csv"))));
    assert_eq!(&line[..64], digest);
}

#[test]
fn e2e_artifacts_are_consistent() {
    let run = shared_run().join("run");
    let board = String::from_utf8(read(&run.join("leaderboard.csv"))).unwrap();
    let teams: Vec<&str> = board.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(teams[0], "oracle", "{board}");
    assert_eq!(teams.len(), 3);

    let report = String::from_utf8(read(&run.join("qc/report.csv"))).unwrap();
    let passes: Vec<&str> = report.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(passes.len(), 4);
    assert_eq!(passes.iter().filter(|p| **p == "true").count(), 3, "{report}");

    let split: DatasetSplit = serde_json::from_slice(&read(&run.join("split.json"))).unwrap();
    assert_eq!(split.sizes(), (13, 2, 5));
    let scores = read_scores_csv(&read(&run.join("scores/oracle.csv"))).unwrap();
    assert_eq!(scores.len(), 7);
    assert!(scores.iter().all(|r| r.cc.unwrap() > 0.999999));
}

#[test]
fn evaluate_without_ground_truth_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = saliency(&["evaluate", "--gt", p(&dir.path().join("nope")), "--pred", p(dir.path()), "--out", p(&dir.path().join("s.csv"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: evaluate:"), "{err}");
    assert!(err.contains("ground truth directory"), "{err}");
    assert!(!err.contains("backtrace"), "{err}");
}

fn pool_meta(dir: &Path, n: usize) -> std::path::PathBuf {
    let videos: Vec<VideoMeta> = (0..n).map(|i| VideoMeta::new(format!("v{i:02}"), 64, 36, 10.0, 3000).unwrap()).collect();
    let path = dir.join("meta.csv");
    std::fs::write(&path, formats::save_video_meta(&videos).unwrap()).unwrap();
    path
}

#[test]
fn split_of_fifteen() {
    let dir = tempfile::tempdir().unwrap();
    let meta = pool_meta(dir.path(), 15);
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let stdout = ok(&["--seed", "3", "split", "--meta", p(&meta), "--out", p(&a), "--write-meta", p(&dir.path().join("m.csv"))]);
    assert_eq!(stdout.trim(), "train 10, public test 2, private test 3");
    ok(&["--seed", "3", "split", "--meta", p(&meta), "--out", p(&b)]);
    assert_eq!(read(&a), read(&b));
    let split: DatasetSplit = serde_json::from_slice(&read(&a)).unwrap();
    let written = formats::load_video_meta(&read(&dir.path().join("m.csv"))).unwrap();
    for v in &written {
        assert_eq!(Some(v.subset), split.subset_of(&v.video_id));
    }
    ok(&["--seed", "4", "split", "--meta", p(&meta), "--out", p(&b)]);
    assert_ne!(read(&a), read(&b));
}

fn row(id: &str, m: [f64; 4]) -> VideoScoreRow {
    VideoScoreRow {
        video_id: id.into(),
        auc_judd: Some(m[0]),
        cc: Some(m[1]),
        sim: Some(m[2]),
        nss: Some(m[3]),
        frames: 10,
        skipped_auc_judd: 0,
        skipped_cc: 0,
        skipped_sim: 0,
        skipped_nss: 0,
    }
}

#[test]
fn leaderboard_from_score_tables() {
    let dir = tempfile::tempdir().unwrap();
    let tables = [
        ("alpha", [[0.80, 0.50, 0.40, 2.0], [0.82, 0.52, 0.42, 2.2]]),
        ("beta", [[0.85, 0.40, 0.45, 1.5], [0.85, 0.40, 0.45, 1.5]]),
        ("gamma", [[0.70, 0.30, 0.30, 1.0], [0.72, 0.32, 0.32, 1.2]]),
    ];
    let mut args = vec!["leaderboard".to_string()];
    for (team, rows) in &tables {
        let path = dir.path().join(format!("{team}.csv"));
        let rows: Vec<VideoScoreRow> = rows.iter().enumerate().map(|(i, m)| row(&format!("v{i}"), *m)).collect();
        std::fs::write(&path, saliency_core::leaderboard::write_scores_csv(&rows).unwrap()).unwrap();
        args.push("--submission".into());
        args.push(format!("{team}={}", path.display()));
    }
    let out = dir.path().join("board.csv");
    args.extend(["--out".into(), p(&out).into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let table = ok(&refs);
    // alpha ranks 2,1,2,1 and beta 1,2,1,2: mean ranks tie, beta has the higher AUC
    let board = String::from_utf8(read(&out)).unwrap();
    let order: Vec<&str> = board.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(order, ["beta", "alpha", "gamma"], "{table}");
    assert!(table.contains("gamma"));

    // directory form gives the same table
    let board_dir = dir.path().join("tables");
    std::fs::create_dir(&board_dir).unwrap();
    for (team, _) in &tables {
        std::fs::copy(dir.path().join(format!("{team}.csv")), board_dir.join(format!("{team}.csv"))).unwrap();
    }
    assert_eq!(ok(&["leaderboard", "--dir", p(&board_dir)]), table);
    assert!(!saliency(&["leaderboard"]).status.success());
}

#[test]
fn config_file_overrides_pipeline() {
    let run = shared_run().join("run");
    let dir = tempfile::tempdir().unwrap();
    let meta = p(&run.join("corpus/meta.csv")).to_string();
    let tracks = p(&run.join("export")).to_string();
    let default_gt = dir.path().join("gt_default");
    ok(&["render", "--meta", &meta, "--tracks", &tracks, "--out", p(&default_gt)]);
    assert_eq!(read(&default_gt.join("clip_000/fixations.csv")), read(&run.join("gt/clip_000/fixations.csv")));

    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, "trim_ms = 0.0\nshift_ms = 0.0\n").unwrap();
    let gt = dir.path().join("gt_untrimmed");
    let stdout = ok(&["--config", p(&config), "render", "--meta", &meta, "--tracks", &tracks, "--out", p(&gt)]);
    assert!(stdout.lines().all(|l| l.contains(": 40 frames")), "{stdout}");
    assert!(stdout.lines().count() == 20);

    std::fs::write(&config, "resample_hz = -5.0\n").unwrap();
    assert!(!saliency(&["--config", p(&config), "split", "--meta", &meta, "--out", p(&dir.path().join("s.json"))]).status.success());
}

#[test]
fn baseline_fit_emit_evaluate() {
    let run = shared_run().join("run");
    let dir = tempfile::tempdir().unwrap();
    let meta = run.join("corpus/meta_split.csv");
    let prior = dir.path().join("prior.json");
    ok(&["baseline", "fit", "--gt", p(&run.join("gt")), "--meta", p(&meta), "--canvas", "160x90", "--out", p(&prior)]);
    assert_eq!(read(&prior), read(&run.join("baseline/prior.json")));

    let pred = dir.path().join("pred");
    ok(&["baseline", "emit", "--prior", p(&prior), "--meta", p(&meta), "--subset", "private_test", "--format", "y4m", "--out", p(&pred)]);
    let streams = std::fs::read_dir(&pred).unwrap().count();
    assert_eq!(streams, 5);

    let scores = dir.path().join("scores.csv");
    ok(&["evaluate", "--gt", p(&run.join("gt")), "--pred", p(&pred), "--meta", p(&meta), "--subset", "private_test", "--out", p(&scores)]);
    let rows = read_scores_csv(&read(&scores)).unwrap();
    assert_eq!(rows.len(), 5);
    // y4m quantizes like png, so the scores equal the e2e center-prior table's rows
    let e2e_rows = read_scores_csv(&read(&run.join("scores/center_prior.csv"))).unwrap();
    for r in &rows {
        let e = e2e_rows.iter().find(|e| e.video_id == r.video_id).unwrap();
        assert!((r.cc.unwrap() - e.cc.unwrap()).abs() < 1e-9, "{r:?} vs {e:?}");
    }
}

#[test]
fn calibrate_recovers_viewer_lag() {
    // scripted viewers trail the eye by 300 ms; references on the original clock
    let run = shared_run().join("run");
    let dir = tempfile::tempdir().unwrap();
    let videos = formats::load_video_meta(&read(&run.join("corpus/meta.csv"))).unwrap();
    let untrimmed = PipelineConfig { trim_ms: 0.0, ..PipelineConfig::default() };
    let tracks = dir.path().join("tracks");
    let references = dir.path().join("references");
    let manifest = saliency_service::export::read_manifest(&run.join("export_all/manifest.csv")).unwrap();
    for r in manifest.iter().filter(|r| r.is_validation) {
        let dest = tracks.join(&r.video_id).join(format!("{}.track", r.session_id));
        std::fs::create_dir_all(dest.parent().unwrap()).unwrap();
        std::fs::copy(run.join("export_all").join(&r.track_path), dest).unwrap();
        let maps_dir = references.join(&r.video_id);
        if !maps_dir.exists() {
            let video = videos.iter().find(|v| v.video_id == r.video_id).unwrap();
            for (i, m) in reference_maps(video, &untrimmed).unwrap().iter().enumerate() {
                let path = formats::PngDir::frame_path(&maps_dir, i);
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                std::fs::write(path, formats::save_saliency_frame(m).unwrap()).unwrap();
            }
        }
    }
    let out = dir.path().join("cal.json");
    let meta = p(&run.join("corpus/meta.csv")).to_string();
    let stdout = ok(&["calibrate", "--meta", &meta, "--tracks", p(&tracks), "--references", p(&references), "--shifts", "0:600:100", "--trims", "0,1000", "--out", p(&out)]);
    let cal: serde_json::Value = serde_json::from_slice(&read(&out)).unwrap();
    assert_eq!(cal["best_shift_ms"], 300.0, "{stdout}");
    assert_eq!(cal["score_grid"].as_array().unwrap().len(), 7);
    assert!(stdout.contains("best: shift 300 ms"));
}
