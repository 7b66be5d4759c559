//! Directory layouts shared by the subcommands.
//!
//! ```text
//! GT/<video_id>/maps/%06d.png       rendered ground truth
//! GT/<video_id>/fixations.csv       frame_index,x,y
//! PRED/<video_id>/%06d.png | PRED/<video_id>.y4m
//! TRACKS/manifest.csv + tracks/...  (an export) or TRACKS/<video_id>/*.track
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use saliency_core::formats::{self, FrameSequence, PngDir};
use saliency_core::pipeline::GroundTruth;
use saliency_core::types::{FrameFixations, MouseTrack, VideoMeta};
use saliency_service::export::read_manifest;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn load_meta(path: &Path) -> Result<Vec<VideoMeta>> {
    formats::load_video_meta(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn meta_map(videos: &[VideoMeta]) -> BTreeMap<String, VideoMeta> {
    videos.iter().map(|v| (v.video_id.clone(), v.clone())).collect()
}

/// Writes maps and fixations for one video; returns the frame count.
pub fn write_ground_truth(dir: &Path, gt: &GroundTruth) -> Result<usize> {
    let video_dir = dir.join(&gt.video.video_id);
    let maps = video_dir.join("maps");
    fs::create_dir_all(&maps).with_context(|| format!("creating {}", maps.display()))?;
    (0..gt.frame_count()).into_par_iter().try_for_each(|i| -> Result<()> {
        let png = formats::save_saliency_frame(&gt.render_frame(i))?;
        write(&PngDir::frame_path(&maps, i), &png)
    })?;
    write(&video_dir.join("fixations.csv"), &formats::save_fixations(&gt.fixations))?;
    Ok(gt.frame_count())
}

pub struct GtVideo {
    pub maps: PngDir,
    pub fixations: Vec<FrameFixations>,
}

pub fn open_ground_truth(dir: &Path, video_id: &str) -> Result<GtVideo> {
    let video_dir = dir.join(video_id);
    let maps = PngDir::open(&video_dir.join("maps")).with_context(|| format!("ground truth for {video_id}"))?;
    let fixations = formats::load_fixations(&read(&video_dir.join("fixations.csv"))?, maps.len())
        .with_context(|| format!("fixations for {video_id}"))?;
    Ok(GtVideo { maps, fixations })
}

/// Video ids with a ground-truth directory, sorted.
pub fn ground_truth_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if entry.path().join("maps").is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

/// `DIR/<id>.y4m` or the frame directory `DIR/<id>/`.
pub fn open_frames(dir: &Path, video_id: &str) -> Result<Box<dyn FrameSequence>> {
    let stream = dir.join(format!("{video_id}.y4m"));
    let path = if stream.is_file() { stream } else { dir.join(video_id) };
    if !path.exists() {
        bail!("no frames for {video_id} under {}", dir.display());
    }
    formats::open_sequence(&path).with_context(|| format!("opening {}", path.display()))
}

/// Tracks grouped by video, from an export (manifest) or a plain
/// `<video_id>/*.track` tree. Order within a video is by path.
pub fn load_tracks(dir: &Path) -> Result<BTreeMap<String, Vec<MouseTrack>>> {
    let mut paths: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let manifest = dir.join("manifest.csv");
    if manifest.is_file() {
        for row in read_manifest(&manifest)? {
            paths.entry(row.video_id).or_default().push(dir.join(row.track_path));
        }
    } else {
        for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let entry = entry?;
            if !entry.path().is_dir() {
                continue;
            }
            let video_id = entry.file_name().to_string_lossy().into_owned();
            for file in fs::read_dir(entry.path())? {
                let path = file?.path();
                if path.extension().is_some_and(|e| e == "track") {
                    paths.entry(video_id.clone()).or_default().push(path);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for (video_id, mut files) in paths {
        files.sort();
        let tracks = files
            .iter()
            .map(|p| formats::load_track(&read(p)?).with_context(|| format!("parsing {}", p.display())))
            .collect::<Result<Vec<_>>>()?;
        out.insert(video_id, tracks);
    }
    Ok(out)
}

pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok((w, h))
}

/// `a,b,c` or `start:stop:step` (inclusive).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}"));
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(format!("empty range {s:?}"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(format!("expected a,b,c or start:stop:step, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:600:50").unwrap().len(), 13);
        assert_eq!(parse_grid("0,1000").unwrap(), [0.0, 1000.0]);
        assert!(parse_grid("5:1:1").is_err());
        assert_eq!(parse_dims("1920x1080").unwrap(), (1920, 1080));
        assert!(parse_dims("0x5").is_err());
    }
}
