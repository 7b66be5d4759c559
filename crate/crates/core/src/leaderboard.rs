//! Mean-rank leaderboard over the four metrics.
//!
//! Each metric is ranked independently with competition ranking (higher is
//! better, equal values share the smaller rank). Entries are ordered by the
//! mean of their four ranks; equal mean ranks fall back to the first metric,
//! in leaderboard order, whose values differ.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{compensated_mean, Metric, MetricScores, VideoEvaluation};

#[derive(Debug, Error)]
pub enum LeaderboardError {
    #[error("non-finite value {value} at position {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("no submissions")]
    Empty,
    #[error("submission {team} covers a different video set; symmetric difference: {diff:?}")]
    VideoSetMismatch { team: String, diff: Vec<String> },
    #[error("submission {team} has no score for {metric} on video {video_id}")]
    MissingScore { team: String, video_id: String, metric: &'static str },
    #[error("submission {0} has no videos")]
    NoVideos(String),
    #[error("scores table: {0}")]
    Table(String),
}

/// Competition ranks: `1 + #(strictly greater values)`.
pub fn rank_metric(values: &[f64]) -> Result<Vec<u32>, LeaderboardError> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(LeaderboardError::NonFinite { index, value });
    }
    Ok(values
        .iter()
        .map(|v| 1 + values.iter().filter(|o| *o > v).count() as u32)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub team: String,
    pub scores: MetricScores,
}

impl Submission {
    pub fn new(team: impl Into<String>, scores: MetricScores) -> Self {
        Self { team: team.into(), scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub team: String,
    pub scores: MetricScores,
    pub per_metric_rank: [u32; 4],
    pub mean_rank: f64,
    pub final_position: usize,
}

impl LeaderboardEntry {
    fn rank_sum(&self) -> u32 {
        self.per_metric_rank.iter().sum()
    }
}

fn compare_entries(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    // Rank sums are integers, so equal mean ranks compare exactly.
    a.rank_sum().cmp(&b.rank_sum()).then_with(|| {
        Metric::ALL
            .iter()
            .map(|m| b.scores.get(*m).total_cmp(&a.scores.get(*m)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Stable sort by mean rank and tie-break; assigns `final_position`.
pub fn order_entries(mut entries: Vec<LeaderboardEntry>) -> Vec<LeaderboardEntry> {
    entries.sort_by(compare_entries);
    for (i, e) in entries.iter_mut().enumerate() {
        e.final_position = i + 1;
    }
    entries
}

/// Ranks submissions that already carry dataset-level scores.
pub fn rank_submissions(submissions: &[Submission]) -> Result<Vec<LeaderboardEntry>, LeaderboardError> {
    if submissions.is_empty() {
        return Err(LeaderboardError::Empty);
    }
    let mut ranks = vec![[0u32; 4]; submissions.len()];
    for m in Metric::ALL {
        let values: Vec<f64> = submissions.iter().map(|s| s.scores.get(m)).collect();
        for (slot, r) in ranks.iter_mut().zip(rank_metric(&values)?) {
            slot[m.index()] = r;
        }
    }
    let entries = submissions
        .iter()
        .zip(ranks)
        .map(|(s, per_metric_rank)| LeaderboardEntry {
            team: s.team.clone(),
            scores: s.scores,
            mean_rank: f64::from(per_metric_rank.iter().sum::<u32>()) / 4.0,
            per_metric_rank,
            final_position: 0,
        })
        .collect();
    Ok(order_entries(entries))
}

/// One row of a submission's per-video scores table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScoreRow {
    pub video_id: String,
    pub auc_judd: Option<f64>,
    pub cc: Option<f64>,
    pub sim: Option<f64>,
    pub nss: Option<f64>,
    pub frames: usize,
    pub skipped_auc_judd: usize,
    pub skipped_cc: usize,
    pub skipped_sim: usize,
    pub skipped_nss: usize,
}

impl VideoScoreRow {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::AucJudd => self.auc_judd,
            Metric::Cc => self.cc,
            Metric::Sim => self.sim,
            Metric::Nss => self.nss,
        }
    }
}

impl From<&VideoEvaluation> for VideoScoreRow {
    fn from(e: &VideoEvaluation) -> Self {
        Self {
            video_id: e.video_id.clone(),
            auc_judd: e.means[0],
            cc: e.means[1],
            sim: e.means[2],
            nss: e.means[3],
            frames: e.frame_count(),
            skipped_auc_judd: e.skipped[0],
            skipped_cc: e.skipped[1],
            skipped_sim: e.skipped[2],
            skipped_nss: e.skipped[3],
        }
    }
}

/// `video_id,auc_judd,cc,sim,nss,frames,skipped_*` with empty cells for undefined means.
pub fn write_scores_csv(rows: &[VideoScoreRow]) -> Result<Vec<u8>, LeaderboardError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| LeaderboardError::Table(e.to_string()))?;
    }
    w.into_inner().map_err(|e| LeaderboardError::Table(e.to_string()))
}

pub fn read_scores_csv(bytes: &[u8]) -> Result<Vec<VideoScoreRow>, LeaderboardError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| LeaderboardError::Table(e.to_string()))
}

/// Dataset means with equal video weight, then ranking. Every submission
/// must cover the same videos.
pub fn build_leaderboard(tables: &[(String, Vec<VideoScoreRow>)]) -> Result<Vec<LeaderboardEntry>, LeaderboardError> {
    let (_, first) = tables.first().ok_or(LeaderboardError::Empty)?;
    let reference: BTreeSet<&str> = first.iter().map(|r| r.video_id.as_str()).collect();
    let mut submissions = Vec::with_capacity(tables.len());
    for (team, rows) in tables {
        let videos: BTreeSet<&str> = rows.iter().map(|r| r.video_id.as_str()).collect();
        if videos != reference || videos.len() != rows.len() {
            let diff = reference.symmetric_difference(&videos).map(|s| s.to_string()).collect();
            return Err(LeaderboardError::VideoSetMismatch { team: team.clone(), diff });
        }
        if rows.is_empty() {
            return Err(LeaderboardError::NoVideos(team.clone()));
        }
        let mut means = [0.0; 4];
        for m in Metric::ALL {
            let mut values = Vec::with_capacity(rows.len());
            for r in rows {
                values.push(r.get(m).ok_or_else(|| LeaderboardError::MissingScore {
                    team: team.clone(),
                    video_id: r.video_id.clone(),
                    metric: m.label(),
                })?);
            }
            means[m.index()] = compensated_mean(values).unwrap_or(f64::NAN);
        }
        submissions.push(Submission::new(team.clone(), MetricScores::from_array(means)));
    }
    rank_submissions(&submissions)
}

/// Machine-readable leaderboard at full precision.
pub fn leaderboard_csv(entries: &[LeaderboardEntry]) -> String {
    let mut out = String::from(
        "position,team,auc_judd,cc,sim,nss,rank_auc_judd,rank_cc,rank_sim,rank_nss,mean_rank\n",
    );
    for e in entries {
        let s = e.scores;
        let r = e.per_metric_rank;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.final_position, e.team, s.auc_judd, s.cc, s.sim, s.nss, r[0], r[1], r[2], r[3], e.mean_rank
        );
    }
    out
}

/// Human-readable table: Team, AUC-Judd, CC, SIM, NSS, Rank.
pub fn render_table(entries: &[LeaderboardEntry]) -> String {
    let team_w = entries.iter().map(|e| e.team.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<team_w$}  {:>8}  {:>6}  {:>6}  {:>6}  {:>5}\n", "Team", "AUC-Judd", "CC", "SIM", "NSS", "Rank");
    for e in entries {
        let s = e.scores;
        let _ = writeln!(
            out,
            "{:<team_w$}  {:>8.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>5.2}",
            e.team, s.auc_judd, s.cc, s.sim, s.nss, e.mean_rank
        );
    }
    out
}
