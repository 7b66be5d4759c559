use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use saliency_core::center_prior::{self, CenterPrior, REFERENCE_CANVAS};
use saliency_core::formats::{self, FrameSequence, PngDir};
use saliency_core::leaderboard::{self, VideoScoreRow};
use saliency_core::metrics::evaluate_video;
use saliency_core::pipeline::{self, CalibrationVideo};
use saliency_core::qc::{self, QcReport};
use saliency_core::split::split_dataset;
use saliency_core::types::{PipelineConfig, SaliencyFrame, Subset, VideoMeta};
use saliency_service::{export_views, CaptchaItem, Catalog, ExportFilter, FileStore, Service, ServiceConfig};

use crate::layout::{self, load_meta, meta_map, open_frames, open_ground_truth, write};
use crate::{BaselineCommand, CalibrateArgs, EvaluateArgs, ExportArgs, LeaderboardArgs, QcArgs, RenderArgs, RunContext, ServeArgs, SplitArgs};

fn parse_subset(s: &str) -> Result<Subset> {
    Subset::parse(s).ok_or_else(|| anyhow!("unknown subset {s:?} (train, public_test, private_test)"))
}

fn load_captchas(path: &Path) -> Result<Vec<CaptchaItem>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut items = Vec::new();
    for row in reader.deserialize::<CaptchaItem>() {
        let mut item = row.with_context(|| format!("parsing {}", path.display()))?;
        item.audio = item.audio.map(|a| base.join(a));
        items.push(item);
    }
    Ok(items)
}

pub fn serve(ctx: &RunContext, a: ServeArgs) -> Result<()> {
    let catalog = Catalog::load(&a.meta, a.validation.as_deref())?.with_files(&a.videos)?;
    let mut config = ServiceConfig { seed: ctx.seed, pipeline: ctx.config.clone(), ..ServiceConfig::default() };
    if let Some(path) = &a.captchas {
        config.captchas = load_captchas(path)?;
    }
    if let Some(r) = a.captcha_retries {
        config.captcha_retries = r;
    }
    let store = FileStore::open(&a.store)?;
    let service = Arc::new(Service::new(config, catalog, store, saliency_service::service::system_clock())?);
    let addr = std::net::SocketAddr::new(a.bind, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("serving on http://{addr}");
    runtime.block_on(saliency_service::serve(service, addr))?;
    Ok(())
}

pub fn export(a: ExportArgs) -> Result<()> {
    let store = FileStore::open(&a.store)?;
    let reports: Option<BTreeMap<String, QcReport>> = match &a.qc {
        Some(p) => Some(serde_json::from_slice(&layout::read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let filter = reports.as_ref().map_or(ExportFilter::All, ExportFilter::QcPassed);
    let s = export_views(&store, &a.out, filter)?;
    println!("exported {} tracks from {} sessions to {}", s.tracks, s.sessions, a.out.display());
    Ok(())
}

/// Validation references keyed by video id; videos without a reference are skipped.
fn load_references(dir: &Path, ids: impl IntoIterator<Item = String>) -> Result<BTreeMap<String, Box<dyn FrameSequence>>> {
    let mut out = BTreeMap::new();
    for id in ids {
        if dir.join(&id).exists() || dir.join(format!("{id}.y4m")).exists() {
            let frames = open_frames(dir, &id)?;
            out.insert(id, frames);
        }
    }
    Ok(out)
}

/// QC over every stored session; writes `report.csv` and `reports.json`.
pub fn run_qc(store_dir: &Path, videos: &[VideoMeta], references: &Path, out: &Path, config: &PipelineConfig) -> Result<BTreeMap<String, QcReport>> {
    let store = FileStore::open(store_dir)?;
    let meta = meta_map(videos);
    let refs = load_references(references, meta.keys().cloned())?;
    let mut reports = BTreeMap::new();
    for id in store.session_ids()? {
        let Some(record) = store.load(&id)? else { continue };
        let views = store.views(&id)?;
        let report = qc::qc_session(&record.session, &views, &meta, &refs, config).with_context(|| format!("session {id}"))?;
        reports.insert(id, report);
    }
    let list: Vec<QcReport> = reports.values().cloned().collect();
    write(&out.join("report.csv"), qc::report_csv(&list).as_bytes())?;
    write(&out.join("reports.json"), &serde_json::to_vec_pretty(&reports)?)?;
    Ok(reports)
}

pub fn qc(ctx: &RunContext, a: QcArgs) -> Result<()> {
    let videos = load_meta(&a.meta)?;
    let reports = run_qc(&a.store, &videos, &a.references, &a.out, &ctx.config)?;
    let passed = reports.values().filter(|r| r.overall_pass).count();
    println!("{passed} of {} sessions passed; report in {}", reports.len(), a.out.display());
    Ok(())
}

/// Ground truth for every video in `videos` that has tracks. Returns
/// `(video_id, frames, usable_views, dropped_views)`.
pub fn run_render(videos: &[VideoMeta], tracks_dir: &Path, out: &Path, config: &PipelineConfig) -> Result<Vec<(String, usize, usize, usize)>> {
    let tracks = layout::load_tracks(tracks_dir)?;
    let mut summary = Vec::new();
    for video in videos {
        let Some(t) = tracks.get(&video.video_id) else { continue };
        let gt = pipeline::build_ground_truth(video, t, config).with_context(|| format!("video {}", video.video_id))?;
        let frames = layout::write_ground_truth(out, &gt)?;
        summary.push((video.video_id.clone(), frames, gt.usable_views, gt.dropped_views));
    }
    if let Some(unknown) = tracks.keys().find(|id| !videos.iter().any(|v| &v.video_id == *id)) {
        bail!("tracks for {unknown} have no metadata");
    }
    Ok(summary)
}

pub fn render(ctx: &RunContext, a: RenderArgs) -> Result<()> {
    let videos = load_meta(&a.meta)?;
    for (id, frames, used, dropped) in run_render(&videos, &a.tracks, &a.out, &ctx.config)? {
        println!("{id}: {frames} frames from {used} views ({dropped} dropped)");
    }
    Ok(())
}

pub fn calibrate(ctx: &RunContext, a: CalibrateArgs) -> Result<()> {
    let videos = load_meta(&a.meta)?;
    let tracks = layout::load_tracks(&a.tracks)?;
    let mut loaded = Vec::new();
    for v in &videos {
        if let Some(t) = tracks.get(&v.video_id) {
            loaded.push((v, t, open_frames(&a.references, &v.video_id)?));
        }
    }
    let inputs: Vec<CalibrationVideo<'_>> =
        loaded.iter().map(|(video, tracks, r)| CalibrationVideo { video, tracks, reference: r.as_ref() }).collect();
    let cal = pipeline::calibrate_alignment(&inputs, &a.shifts, &a.trims, &ctx.config)?;
    print!("shift_ms");
    for t in &cal.candidate_trims_ms {
        print!("  trim={t:<6}");
    }
    println!();
    for (s, row) in cal.candidate_shifts_ms.iter().zip(&cal.score_grid) {
        print!("{s:>8}");
        for v in row {
            print!("  {:>11}", v.map_or("-".to_string(), |v| format!("{v:.6}")));
        }
        println!();
    }
    println!("best: shift {} ms, trim {} ms (cc {:.6})", cal.best_shift_ms, cal.best_trim_ms, cal.best_score);
    if let Some(out) = &a.out {
        let json = serde_json::json!({
            "shifts_ms": cal.candidate_shifts_ms,
            "trims_ms": cal.candidate_trims_ms,
            "score_grid": cal.score_grid,
            "best_shift_ms": cal.best_shift_ms,
            "best_trim_ms": cal.best_trim_ms,
            "best_score": cal.best_score,
        });
        write(out, &serde_json::to_vec_pretty(&json)?)?;
    }
    Ok(())
}

fn check_gt_dir(gt: &Path) -> Result<()> {
    if !gt.is_dir() {
        bail!("ground truth directory {} does not exist", gt.display());
    }
    Ok(())
}

/// Scores a prediction tree against every listed ground-truth video.
pub fn run_evaluate(gt: &Path, pred: &Path, ids: &[String]) -> Result<Vec<VideoScoreRow>> {
    check_gt_dir(gt)?;
    ids.iter()
        .map(|id| {
            let truth = open_ground_truth(gt, id)?;
            let p = open_frames(pred, id)?;
            let eval = evaluate_video(id, p.as_ref(), &truth.maps, &truth.fixations)?;
            Ok(VideoScoreRow::from(&eval))
        })
        .collect()
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    check_gt_dir(&a.gt).context("evaluate")?;
    let mut ids = layout::ground_truth_ids(&a.gt).context("evaluate")?;
    if let (Some(meta), Some(subset)) = (&a.meta, &a.subset) {
        let subset = parse_subset(subset)?;
        let keep: Vec<String> = load_meta(meta)?.into_iter().filter(|v| v.subset == subset).map(|v| v.video_id).collect();
        ids.retain(|id| keep.contains(id));
    }
    let rows = run_evaluate(&a.gt, &a.pred, &ids).context("evaluate")?;
    write(&a.out, &leaderboard::write_scores_csv(&rows)?)?;
    println!("scored {} videos -> {}", rows.len(), a.out.display());
    Ok(())
}

pub fn run_leaderboard(tables: Vec<(String, PathBuf)>) -> Result<Vec<leaderboard::LeaderboardEntry>> {
    let loaded = tables
        .into_iter()
        .map(|(team, path)| {
            let rows = leaderboard::read_scores_csv(&layout::read(&path)?).with_context(|| format!("scores for {team}"))?;
            Ok((team, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(leaderboard::build_leaderboard(&loaded)?)
}

pub fn leaderboard(a: LeaderboardArgs) -> Result<()> {
    let mut tables = a.submissions;
    if let Some(dir) = &a.dir {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        for f in files {
            let team = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            tables.push((team, f));
        }
    }
    if tables.is_empty() {
        bail!("no submissions given (use --submission TEAM=FILE or --dir)");
    }
    let entries = run_leaderboard(tables)?;
    print!("{}", leaderboard::render_table(&entries));
    if let Some(out) = &a.out {
        write(out, leaderboard::leaderboard_csv(&entries).as_bytes())?;
    }
    Ok(())
}

pub fn fit_prior(gt: &Path, ids: &[String], canvas: (usize, usize)) -> Result<CenterPrior> {
    let dirs = ids
        .iter()
        .map(|id| PngDir::open(&gt.join(id).join("maps")).with_context(|| format!("training maps for {id}")))
        .collect::<Result<Vec<_>>>()?;
    let sources: Vec<&dyn FrameSequence> = dirs.iter().map(|d| d as &dyn FrameSequence).collect();
    let avg = center_prior::average_training_map(&sources, canvas)?;
    Ok(center_prior::fit_center_gaussian(&avg)?)
}

/// Writes the prior for each video as `OUT/<id>/%06d.png` or `OUT/<id>.y4m`.
pub fn emit_prior(prior: &CenterPrior, videos: &[VideoMeta], out: &Path, y4m: bool, config: &PipelineConfig) -> Result<usize> {
    let predictions = center_prior::emit_baseline(prior, videos, config)?;
    for p in &predictions {
        if y4m {
            let fps = videos.iter().find(|v| v.video_id == p.video_id).map_or(25, |v| v.fps.round() as u32);
            let frames: Vec<SaliencyFrame> = vec![p.frame.clone(); p.frames];
            write(&out.join(format!("{}.y4m", p.video_id)), &formats::write_y4m(&frames, fps)?)?;
        } else {
            let png = formats::save_saliency_frame(&p.frame)?;
            let dir = out.join(&p.video_id);
            (0..p.frames).into_par_iter().try_for_each(|i| write(&PngDir::frame_path(&dir, i), &png))?;
        }
    }
    Ok(predictions.len())
}

pub fn baseline(ctx: &RunContext, b: BaselineCommand) -> Result<()> {
    match b {
        BaselineCommand::Fit { gt, meta, canvas, out } => {
            let ids = match meta {
                Some(m) => load_meta(&m)?.into_iter().filter(|v| v.subset == Subset::Train).map(|v| v.video_id).collect(),
                None => layout::ground_truth_ids(&gt)?,
            };
            let prior = fit_prior(&gt, &ids, canvas)?;
            write(&out, &serde_json::to_vec_pretty(&prior)?)?;
            println!(
                "fitted on {} videos: sigma_x {:.3}, sigma_y {:.3} on {}x{}",
                ids.len(),
                prior.sigma_x,
                prior.sigma_y,
                prior.width,
                prior.height
            );
        }
        BaselineCommand::Emit { prior, meta, subset, format, out } => {
            let prior: CenterPrior = serde_json::from_slice(&layout::read(&prior)?).context("parsing prior")?;
            let mut videos = load_meta(&meta)?;
            if let Some(s) = subset {
                let s = parse_subset(&s)?;
                videos.retain(|v| v.subset == s);
            }
            let y4m = match format.as_str() {
                "png" => false,
                "y4m" => true,
                other => bail!("unknown format {other:?}"),
            };
            let n = emit_prior(&prior, &videos, &out, y4m, &ctx.config)?;
            println!("emitted {n} videos to {}", out.display());
        }
    }
    Ok(())
}

pub fn split(ctx: &RunContext, a: SplitArgs) -> Result<()> {
    let mut videos = load_meta(&a.meta)?;
    let ids: Vec<String> = videos.iter().map(|v| v.video_id.clone()).collect();
    let s = split_dataset(&ids, ctx.seed)?;
    write(&a.out, &serde_json::to_vec_pretty(&s)?)?;
    let (train, public, private) = s.sizes();
    println!("train {train}, public test {public}, private test {private}");
    if let Some(path) = &a.write_meta {
        for v in &mut videos {
            v.subset = s.subset_of(&v.video_id).expect("every id is assigned");
        }
        write(path, &formats::save_video_meta(&videos)?)?;
    }
    Ok(())
}

/// Canvas used when fitting the prior on data that is not full HD.
pub fn default_canvas(videos: &[VideoMeta]) -> (usize, usize) {
    match videos.first() {
        Some(v) if videos.iter().all(|o| (o.width, o.height) == (v.width, v.height)) => (v.width as usize, v.height as usize),
        _ => REFERENCE_CANVAS,
    }
}
