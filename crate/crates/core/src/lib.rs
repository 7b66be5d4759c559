//! Mouse-tracking saliency toolkit: ground-truth construction from cursor
//! tracks, participant quality control, saliency metrics, the mean-rank
//! leaderboard and the center-prior baseline.

pub mod center_prior;
pub mod formats;
pub mod leaderboard;
pub mod metrics;
pub mod pipeline;
pub mod qc;
pub mod session;
pub mod split;
pub mod types;

pub use center_prior::{average_training_map, emit_baseline, fit_center_gaussian, CenterPrior, PriorError};
pub use formats::{FormatError, FrameSequence};
pub use leaderboard::{build_leaderboard, rank_metric, rank_submissions, LeaderboardEntry, LeaderboardError, Submission};
pub use metrics::{auc_judd, cc, nss, sim, EvalError, Metric, MetricError, MetricScores, Undefined};
pub use pipeline::{
    build_ground_truth, calibrate_alignment, process_track, render_saliency, AlignmentCalibration, GroundTruth,
    PipelineError,
};
pub use qc::{qc_session, QcError, QcReport, ReactionAttempt};
pub use session::{PlaylistEntry, SessionState, StoredView, ViewerSession};
pub use split::{split_dataset, DatasetSplit};
pub use types::{
    CoordSpace, DisplayGeometry, FrameFixations, MouseTrack, PipelineConfig, Rect, SaliencyFrame, Subset, TrackSample,
    ValidationError, VideoMeta,
};
