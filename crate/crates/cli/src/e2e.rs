//! Synthetic end-to-end run: scripted viewers drive the HTTP service, then
//! export, QC, ground truth, split, baseline, evaluation and leaderboard run
//! in sequence. Every output file is listed with its SHA-256 in
//! `manifest.sha256`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use saliency_core::formats::{self, PngDir};
use saliency_core::split::split_dataset;
use saliency_core::types::Subset;
use saliency_service::synthetic::{reference_maps, run_viewer, CorpusSpec, ScriptedViewer, SyntheticCorpus};
use saliency_service::{export_views, Catalog, Clock, ExportFilter, FileStore, Service, ServiceConfig};
use sha2::{Digest, Sha256};

use crate::commands::{self, default_canvas};
use crate::layout::write;
use crate::RunContext;

const MANIFEST: &str = "manifest.sha256";

fn counter_clock() -> Clock {
    let t = Arc::new(AtomicU64::new(1_700_000_000_000));
    Arc::new(move || t.fetch_add(250, Ordering::SeqCst))
}

fn viewer_seed(run_seed: u64, i: usize) -> u64 {
    run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1)
}

fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    let mut rel: Vec<PathBuf> = out.into_iter().map(|p| p.strip_prefix(root).expect("under root").to_path_buf()).collect();
    rel.sort();
    Ok(rel)
}

/// `sha256  relative/path` lines, sorted by path. Returns the digest of the manifest itself.
fn write_manifest(root: &Path) -> Result<String> {
    let mut text = String::new();
    for rel in files_under(root)? {
        if rel == Path::new(MANIFEST) {
            continue;
        }
        let digest = Sha256::digest(fs::read(root.join(&rel))?);
        let name = rel.to_string_lossy().replace('\\', "/");
        text.push_str(&format!("{}  {name}\n", hex::encode(digest)));
    }
    write(&root.join(MANIFEST), text.as_bytes())?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

fn copy_tree(from: &Path, to: &Path) -> Result<()> {
    for rel in files_under(from)? {
        write(&to.join(&rel), &fs::read(from.join(&rel))?)?;
    }
    Ok(())
}

pub fn run(ctx: &RunContext, out: &Path, viewers: usize) -> Result<String> {
    if viewers == 0 {
        bail!("need at least one viewer");
    }
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        bail!("output directory {} is not empty", out.display());
    }
    let config = &ctx.config;

    // corpus
    let corpus_dir = out.join("corpus");
    let mut corpus = SyntheticCorpus::new(&CorpusSpec::default());
    corpus.write_captcha_audio(&corpus_dir.join("captcha")).context("writing captcha clips")?;
    write(&corpus_dir.join("meta.csv"), &formats::save_video_meta(&corpus.videos)?)?;
    write(&corpus_dir.join("validation.txt"), (corpus.validation.join("\n") + "\n").as_bytes())?;
    let meta = corpus.meta();
    let references = out.join("references");
    for id in &corpus.validation {
        let maps = reference_maps(&meta[id], config).with_context(|| format!("reference maps for {id}"))?;
        for (i, m) in maps.iter().enumerate() {
            write(&PngDir::frame_path(&references.join(id), i), &formats::save_saliency_frame(m)?)?;
        }
    }

    // collection
    let store_dir = out.join("store");
    let catalog = Catalog::new(corpus.videos.clone(), &corpus.validation)?;
    let service_config =
        ServiceConfig { seed: ctx.seed, captchas: corpus.captchas.clone(), pipeline: config.clone(), ..ServiceConfig::default() };
    let service = Arc::new(Service::new(service_config, catalog, FileStore::open(&store_dir)?, counter_clock())?);
    let app = saliency_service::router(service.clone());
    let mut scripts: Vec<ScriptedViewer> = (0..viewers).map(|i| ScriptedViewer::new(viewer_seed(ctx.seed, i))).collect();
    // one careless participant for the QC gate to catch
    let mut wanderer = ScriptedViewer::new(viewer_seed(ctx.seed, viewers));
    wanderer.jitter_px = 70.0;
    scripts.push(wanderer);
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let finished = runtime.block_on(async {
        let mut n = 0;
        for s in &scripts {
            let t = run_viewer(&app, s, &meta).await?;
            if t.final_state == "finalized" {
                n += 1;
            }
        }
        Ok::<_, saliency_service::synthetic::DriveError>(n)
    })
    .context("collect")?;

    // export, QC, filtered export
    export_views(service.store(), &out.join("export_all"), ExportFilter::All).context("export")?;
    let reports = commands::run_qc(&store_dir, &corpus.videos, &references, &out.join("qc"), config).context("qc")?;
    let passed = reports.values().filter(|r| r.overall_pass).count();
    let export = export_views(service.store(), &out.join("export"), ExportFilter::QcPassed(&reports)).context("export")?;

    // ground truth on the content pool
    let mut content: Vec<_> = corpus.videos.iter().filter(|v| !corpus.validation.contains(&v.video_id)).cloned().collect();
    let gt_dir = out.join("gt");
    let rendered = commands::run_render(&content, &out.join("export"), &gt_dir, config).context("render")?;

    let ids: Vec<String> = content.iter().map(|v| v.video_id.clone()).collect();
    let split = split_dataset(&ids, ctx.seed).context("split")?;
    write(&out.join("split.json"), &serde_json::to_vec_pretty(&split)?)?;
    for v in &mut content {
        v.subset = split.subset_of(&v.video_id).expect("every id is assigned");
    }
    write(&corpus_dir.join("meta_split.csv"), &formats::save_video_meta(&content)?)?;

    // baseline
    let prior = commands::fit_prior(&gt_dir, &split.train, default_canvas(&content)).context("baseline")?;
    write(&out.join("baseline/prior.json"), &serde_json::to_vec_pretty(&prior)?)?;
    let test: Vec<_> = content.iter().filter(|v| v.subset != Subset::Train).cloned().collect();
    let test_ids: Vec<String> = test.iter().map(|v| v.video_id.clone()).collect();
    let submissions = out.join("submissions");
    commands::emit_prior(&prior, &test, &submissions.join("center_prior"), false, config).context("baseline")?;

    // reference submissions: the ground truth itself and ground truth of the wrong video
    for (i, id) in test_ids.iter().enumerate() {
        copy_tree(&gt_dir.join(id).join("maps"), &submissions.join("oracle").join(id))?;
        let other = &test_ids[(i + 1) % test_ids.len()];
        copy_tree(&gt_dir.join(other).join("maps"), &submissions.join("shuffled").join(id))?;
    }

    let mut tables = Vec::new();
    for team in ["center_prior", "oracle", "shuffled"] {
        let rows = commands::run_evaluate(&gt_dir, &submissions.join(team), &test_ids).with_context(|| format!("evaluate {team}"))?;
        let path = out.join("scores").join(format!("{team}.csv"));
        write(&path, &saliency_core::leaderboard::write_scores_csv(&rows)?)?;
        tables.push((team.to_string(), path));
    }
    let entries = commands::run_leaderboard(tables).context("leaderboard")?;
    let table = saliency_core::leaderboard::render_table(&entries);
    write(&out.join("leaderboard.csv"), saliency_core::leaderboard::leaderboard_csv(&entries).as_bytes())?;
    write(&out.join("leaderboard.txt"), table.as_bytes())?;

    let digest = write_manifest(out).context("manifest")?;
    Ok(format!(
        "{finished} of {} sessions finalized, {passed} passed QC\n\
         {} tracks exported, ground truth for {} videos\n\
         split: {} train, {} public test, {} private test\n\n{table}\nmanifest {digest}",
        scripts.len(),
        export.tracks,
        rendered.len(),
        split.train.len(),
        split.public_test.len(),
        split.private_test.len(),
    ))
}
