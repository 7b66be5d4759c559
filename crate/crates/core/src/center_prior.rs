//! Center-prior baseline: an average training map fitted with a unit-peak
//! Gaussian pinned to the frame center.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{FormatError, FrameSequence};
use crate::metrics::resize_prediction;
use crate::types::{PipelineConfig, SaliencyFrame, VideoMeta, REFERENCE_HEIGHT, REFERENCE_WIDTH};

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("no non-zero frames to average")]
    Empty,
    #[error("cannot fit an all-zero map")]
    AllZero,
    #[error("invalid prior: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub const REFERENCE_CANVAS: (usize, usize) = (REFERENCE_WIDTH as usize, REFERENCE_HEIGHT as usize);

/// Frames per work unit when averaging; partial sums are merged in order so
/// the result does not depend on the thread count.
const CHUNK: usize = 16;

/// Running pixel-wise sum of unit-max frames on a fixed canvas.
#[derive(Debug, Clone)]
pub struct MapAverager {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: usize,
}

impl MapAverager {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, sum: vec![0.0; width * height], count: 0 }
    }

    /// Adds a frame after resizing it to the canvas; all-zero frames are skipped.
    pub fn add(&mut self, frame: &SaliencyFrame) {
        let Some(unit) = frame.normalized_to_unit_max() else { return };
        let unit = if unit.dims() == (self.width, self.height) {
            unit
        } else {
            resize_prediction(&unit, self.width, self.height)
        };
        self.sum.iter_mut().zip(unit.values()).for_each(|(s, v)| *s += v);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &MapAverager) {
        self.sum.iter_mut().zip(&other.sum).for_each(|(s, v)| *s += v);
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<SaliencyFrame, PriorError> {
        if self.count == 0 {
            return Err(PriorError::Empty);
        }
        let n = self.count as f64;
        Ok(SaliencyFrame::from_raw(self.width, self.height, self.sum.iter().map(|s| s / n).collect()))
    }
}

/// Mean of every frame of every sequence, each normalized to unit maximum
/// and resized to `canvas`.
pub fn average_training_map(sources: &[&dyn FrameSequence], canvas: (usize, usize)) -> Result<SaliencyFrame, PriorError> {
    let jobs: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..seq.len()).map(move |f| (s, f)))
        .collect();
    let partials: Vec<MapAverager> = jobs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = MapAverager::new(canvas.0, canvas.1);
            for &(s, f) in chunk {
                acc.add(&sources[s].frame(f)?);
            }
            Ok(acc)
        })
        .collect::<Result<_, PriorError>>()?;
    let mut total = MapAverager::new(canvas.0, canvas.1);
    partials.iter().for_each(|p| total.merge(p));
    total.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterPrior {
    pub width: u32,
    pub height: u32,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

fn gaussian_profile(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let k = -0.5 / (sigma * sigma);
    (0..n).map(|i| ((i as f64 - c).powi(2) * k).exp()).collect()
}

impl CenterPrior {
    pub fn validate(&self) -> Result<(), PriorError> {
        if self.width == 0 || self.height == 0 {
            return Err(PriorError::Invalid("zero canvas".into()));
        }
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0 && self.sigma_x.is_finite() && self.sigma_y.is_finite()) {
            return Err(PriorError::Invalid(format!("sigmas must be positive, got ({}, {})", self.sigma_x, self.sigma_y)));
        }
        Ok(())
    }

    /// Evaluates the prior on a `width × height` grid, scaling each sigma by
    /// the ratio to the fitted canvas.
    pub fn render(&self, width: usize, height: usize) -> SaliencyFrame {
        let sx = self.sigma_x * width as f64 / f64::from(self.width);
        let sy = self.sigma_y * height as f64 / f64::from(self.height);
        let gx = gaussian_profile(width, sx);
        let gy = gaussian_profile(height, sy);
        SaliencyFrame::from_fn(width, height, |x, y| gx[x] * gy[y])
    }
}

/// Sum of squared residuals of a separable unit-peak model, split as
/// `Σa² − 2·Σ_x gx·proj + Σgx²·Σgy²` where `proj` is the map projected on
/// the other axis' profile.
struct Objective {
    width: usize,
    height: usize,
    values: Vec<f64>,
    sum_sq: f64,
}

impl Objective {
    fn full(&self, sx: f64, sy: f64) -> f64 {
        let gx = gaussian_profile(self.width, sx);
        let gy = gaussian_profile(self.height, sy);
        self.residual(&self.project_rows(&gy), &gy, &gx)
    }

    /// `proj[x] = Σ_y a(x, y)·gy[y]`
    fn project_rows(&self, gy: &[f64]) -> Vec<f64> {
        let mut proj = vec![0.0; self.width];
        for (row, g) in self.values.chunks_exact(self.width).zip(gy) {
            proj.iter_mut().zip(row).for_each(|(p, a)| *p += a * g);
        }
        proj
    }

    /// `proj[y] = Σ_x a(x, y)·gx[x]`
    fn project_cols(&self, gx: &[f64]) -> Vec<f64> {
        self.values
            .chunks_exact(self.width)
            .map(|row| row.iter().zip(gx).map(|(a, g)| a * g).sum())
            .collect()
    }

    fn residual(&self, proj: &[f64], gy: &[f64], gx: &[f64]) -> f64 {
        let cross: f64 = proj.iter().zip(gx).map(|(p, g)| p * g).sum();
        let qx: f64 = gx.iter().map(|g| g * g).sum();
        let qy: f64 = gy.iter().map(|g| g * g).sum();
        (self.sum_sq - 2.0 * cross + qx * qy).max(0.0)
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes `f` on `[lo, hi]`: a log-spaced scan picks the bracket, then
/// golden-section search narrows it.
fn line_search(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const SCAN: usize = 48;
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..=SCAN).map(|i| lo * (ratio * i as f64 / SCAN as f64).exp()).collect();
    let vals: Vec<f64> = grid.iter().map(|s| f(*s)).collect();
    let best = (0..=SCAN).min_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(SCAN)]);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 * b.max(1.0) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    let fx = f(x);
    // never return something worse than the scanned optimum
    if fx <= vals[best] {
        (x, fx)
    } else {
        (grid[best], vals[best])
    }
}

/// Fit trace for inspection; `objective` holds the value after each sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub prior: CenterPrior,
    pub objective: Vec<f64>,
}

pub fn fit_center_gaussian(avg: &SaliencyFrame) -> Result<CenterPrior, PriorError> {
    fit_center_gaussian_traced(avg).map(|t| t.prior)
}

/// Coordinate descent over (σx, σy) from `(w/4, h/4)` until a sweep improves
/// the objective by less than 1e-10 relative.
pub fn fit_center_gaussian_traced(avg: &SaliencyFrame) -> Result<FitTrace, PriorError> {
    let unit = avg.normalized_to_unit_max().ok_or(PriorError::AllZero)?;
    let (w, h) = unit.dims();
    let values = unit.into_values();
    let obj = Objective { width: w, height: h, sum_sq: values.iter().map(|v| v * v).sum(), values };
    let (w_f, h_f) = (w as f64, h as f64);
    let (mut sx, mut sy) = (0.25 * w_f, 0.25 * h_f);
    let mut current = obj.full(sx, sy);
    let mut trace = vec![current];
    let upper = 4.0 * w_f.max(h_f);
    for _ in 0..500 {
        let gy = gaussian_profile(h, sy);
        let proj = obj.project_rows(&gy);
        let (nx, _) = line_search(|s| obj.residual(&proj, &gy, &gaussian_profile(w, s)), 0.05, upper);
        let gx = gaussian_profile(w, nx);
        let proj = obj.project_cols(&gx);
        let (ny, fy) = line_search(|s| obj.residual(&proj, &gx, &gaussian_profile(h, s)), 0.05, upper);
        let improved = fy < current;
        if improved {
            sx = nx;
            sy = ny;
        }
        let prev = current;
        current = current.min(fy);
        trace.push(current);
        if !improved || prev - current < 1e-10 * prev || current == 0.0 {
            break;
        }
    }
    Ok(FitTrace {
        prior: CenterPrior { width: w as u32, height: h as u32, sigma_x: sx, sigma_y: sy },
        objective: trace,
    })
}

/// Sum of squared residuals between the unit-max map and the prior model.
pub fn fit_residual(avg: &SaliencyFrame, sigma_x: f64, sigma_y: f64) -> Result<f64, PriorError> {
    let unit = avg.normalized_to_unit_max().ok_or(PriorError::AllZero)?;
    let (w, h) = unit.dims();
    let values = unit.into_values();
    let obj = Objective { width: w, height: h, sum_sq: values.iter().map(|v| v * v).sum(), values };
    Ok(obj.full(sigma_x, sigma_y))
}

/// A constant prediction: one frame repeated `frames` times.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePrediction {
    pub video_id: String,
    pub frame: SaliencyFrame,
    pub frames: usize,
}

impl FrameSequence for BaselinePrediction {
    fn len(&self) -> usize {
        self.frames
    }

    fn frame(&self, index: usize) -> Result<SaliencyFrame, FormatError> {
        if index < self.frames {
            Ok(self.frame.clone())
        } else {
            Err(FormatError::Frame { index, message: "out of range".into() })
        }
    }
}

/// Renders the prior at each video's resolution for every ground-truth frame
/// (the trimmed timeline).
pub fn emit_baseline(prior: &CenterPrior, videos: &[VideoMeta], config: &PipelineConfig) -> Result<Vec<BaselinePrediction>, PriorError> {
    prior.validate()?;
    Ok(videos
        .par_iter()
        .map(|v| BaselinePrediction {
            video_id: v.video_id.clone(),
            frame: prior.render(v.width as usize, v.height as usize),
            frames: v.frames_for(config.effective_duration_ms(v)),
        })
        .collect())
}
