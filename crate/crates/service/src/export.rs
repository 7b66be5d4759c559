//! Dumps the store as track files plus a manifest for offline QC and
//! ground-truth builds.
//!
//! ```text
//! OUT/manifest.csv
//! OUT/sessions/<session_id>.json
//! OUT/tracks/<video_id>/<session_id>.track
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use saliency_core::qc::QcReport;
use serde::Serialize;
use thiserror::Error;

use crate::store::{FileStore, StoreError};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("session json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy)]
pub enum ExportFilter<'a> {
    All,
    /// Only content views usable for ground truth according to the reports,
    /// keyed by session id. Sessions without a report are skipped.
    QcPassed(&'a BTreeMap<String, QcReport>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ManifestRow {
    pub session_id: String,
    pub viewer_id: String,
    pub slot: usize,
    pub video_id: String,
    pub is_validation: bool,
    pub rating: u8,
    pub frequency_hz: String,
    pub frequency_ok: bool,
    pub track_path: String,
}

pub const MANIFEST_HEADER: &str =
    "session_id,viewer_id,slot,video_id,is_validation,rating,frequency_hz,frequency_ok,track_path";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSummary {
    pub sessions: usize,
    pub tracks: usize,
    pub manifest: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    let io = |source| ExportError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(|source| ExportError::Io { path: path.to_path_buf(), source })
}

/// Rows are ordered by session id, then slot.
pub fn export_views(store: &FileStore, out: &Path, filter: ExportFilter<'_>) -> Result<ExportSummary, ExportError> {
    let mut rows = Vec::new();
    let mut sessions = 0;
    for id in store.session_ids()? {
        let Some(record) = store.load(&id)? else { continue };
        let session = &record.session;
        let report = match filter {
            ExportFilter::All => None,
            ExportFilter::QcPassed(reports) => match reports.get(&id) {
                Some(r) => Some(r),
                None => continue,
            },
        };
        if report.is_some_and(|r| !r.overall_pass) {
            continue;
        }
        let views = store.views(&id)?;
        let mut exported = 0;
        for v in &views {
            if let Some(r) = report {
                if !r.usable_views().any(|u| u.slot == v.slot) {
                    continue;
                }
            }
            let rel = format!("tracks/{}/{}.track", v.video_id, session.session_id);
            write(&out.join(&rel), v.track.as_bytes())?;
            rows.push(ManifestRow {
                session_id: session.session_id.clone(),
                viewer_id: session.viewer_id.clone(),
                slot: v.slot,
                video_id: v.video_id.clone(),
                is_validation: session.playlist.get(v.slot).is_some_and(|e| e.is_validation),
                rating: v.rating,
                frequency_hz: format!("{:.3}", v.flags.frequency_hz),
                frequency_ok: v.flags.frequency_ok,
                track_path: rel,
            });
            exported += 1;
        }
        if exported > 0 || matches!(filter, ExportFilter::All) {
            let path = out.join("sessions").join(format!("{id}.json"));
            write(&path, &serde_json::to_vec_pretty(session)?)?;
            sessions += 1;
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(MANIFEST_HEADER.split(','))?;
    }
    for r in &rows {
        writer.serialize(r)?;
    }
    let bytes = writer.into_inner().map_err(|e| ExportError::Csv(e.into_error().into()))?;
    let manifest = out.join("manifest.csv");
    write(&manifest, &bytes)?;
    Ok(ExportSummary { sessions, tracks: rows.len(), manifest })
}

/// Reads a manifest back.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, ExportError> {
    let bytes = fs::read(path).map_err(|source| ExportError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}
