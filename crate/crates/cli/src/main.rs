//! `saliency`: dataset split, ground truth, QC, evaluation, leaderboard,
//! center-prior baseline and the collection service.

mod commands;
mod e2e;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use saliency_core::types::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "saliency", version, about = "Mouse-tracking saliency toolkit")]
pub struct Cli {
    /// Seed for every random choice (playlists, splits, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML file overriding pipeline parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the collection service.
    Serve(ServeArgs),
    /// Export stored views as track files plus a manifest.
    Export(ExportArgs),
    /// Run the participant quality gates over a store.
    Qc(QcArgs),
    /// Build ground-truth fixations and maps from tracks.
    Render(RenderArgs),
    /// Grid-search the temporal shift and trim against reference maps.
    Calibrate(CalibrateArgs),
    /// Score one submission against ground truth.
    Evaluate(EvaluateArgs),
    /// Rank submissions by mean per-metric rank.
    Leaderboard(LeaderboardArgs),
    /// Center-prior baseline.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Split the video pool into train / public test / private test.
    Split(SplitArgs),
    /// Synthetic end-to-end run with a reproducibility manifest.
    E2e(E2eArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    videos: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    /// Validation video ids, one per line.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Captcha bank CSV: id,answer,audio (audio relative to the file).
    #[arg(long)]
    captchas: Option<PathBuf>,
    #[arg(long)]
    captcha_retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// QC reports (JSON from `qc`); exports only usable views when given.
    #[arg(long)]
    qc: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QcArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Eye-tracking reference maps for the validation videos (trimmed timeline).
    #[arg(long)]
    references: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    meta: PathBuf,
    /// An export directory or a `<video_id>/*.track` tree.
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    /// Reference maps on the original (untrimmed) clock.
    #[arg(long)]
    references: PathBuf,
    #[arg(long, default_value = "0:600:50", value_parser = layout::parse_grid)]
    shifts: ::std::vec::Vec<f64>,
    #[arg(long, default_value = "0,1000", value_parser = layout::parse_grid)]
    trims: ::std::vec::Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Restrict to the videos of one subset listed in this metadata file.
    #[arg(long, requires = "subset")]
    meta: Option<PathBuf>,
    #[arg(long)]
    subset: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LeaderboardArgs {
    /// `TEAM=scores.csv`; repeatable.
    #[arg(long = "submission", value_parser = parse_submission)]
    submissions: Vec<(String, PathBuf)>,
    /// Directory of `<team>.csv` score files.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_submission(s: &str) -> Result<(String, PathBuf), String> {
    let (team, path) = s.split_once('=').ok_or_else(|| format!("expected TEAM=FILE, got {s:?}"))?;
    Ok((team.to_string(), PathBuf::from(path)))
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Fit the center Gaussian to the averaged training maps.
    Fit {
        #[arg(long)]
        gt: PathBuf,
        /// Use the `train` videos from this metadata file; all GT videos otherwise.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value = "1920x1080", value_parser = layout::parse_dims)]
        canvas: (usize, usize),
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the fitted prior for every video as a prediction.
    Emit {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        subset: Option<String>,
        /// `png` (frame directories) or `y4m`.
        #[arg(long, default_value = "png")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the metadata with the subset column filled in.
    #[arg(long)]
    write_meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct E2eArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    viewers: usize,
}

pub struct RunContext {
    pub seed: u64,
    pub config: PipelineConfig,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    let config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    pool.build_global().context("building worker pool")?;
    let ctx = RunContext { seed: cli.seed, config: load_config(cli.config.as_ref())? };

    match cli.command {
        Command::Serve(a) => commands::serve(&ctx, a),
        Command::Export(a) => commands::export(a),
        Command::Qc(a) => commands::qc(&ctx, a),
        Command::Render(a) => commands::render(&ctx, a),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Leaderboard(a) => commands::leaderboard(a),
        Command::Baseline(b) => commands::baseline(&ctx, b),
        Command::Split(a) => commands::split(&ctx, a),
        Command::E2e(a) => e2e::run(&ctx, &a.out, a.viewers).map(|summary| println!("{summary}")),
    }
}
