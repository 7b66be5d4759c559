//! Saliency similarity metrics and per-video evaluation.
//!
//! Distribution metrics (CC, SIM) compare a prediction with a ground-truth
//! map; location metrics (AUC-Judd, NSS) compare it with the frame's fixation
//! pixels. Repeated fixations on one pixel count once for the location
//! metrics, as with a binary fixation map.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{FormatError, FrameSequence};
use crate::types::{FrameFixations, SaliencyFrame};

/// Reason a metric has no value on a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Undefined {
    ZeroVariance,
    ZeroSum,
    NoFixations,
    AllPixelsFixated,
}

impl fmt::Display for Undefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Undefined::ZeroVariance => "zero variance",
            Undefined::ZeroSum => "zero sum",
            Undefined::NoFixations => "no fixations",
            Undefined::AllPixelsFixated => "every pixel fixated",
        })
    }
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(Undefined),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    Dimensions((usize, usize), (usize, usize)),
    #[error("fixation ({0}, {1}) outside a {2}x{3} frame")]
    FixationOutside(u32, u32, usize, usize),
}

impl From<Undefined> for MetricError {
    fn from(u: Undefined) -> Self {
        MetricError::Undefined(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    AucJudd,
    Cc,
    Sim,
    Nss,
}

impl Metric {
    /// Leaderboard order, also the tie-break order.
    pub const ALL: [Metric; 4] = [Metric::AucJudd, Metric::Cc, Metric::Sim, Metric::Nss];

    pub fn key(self) -> &'static str {
        match self {
            Metric::AucJudd => "auc_judd",
            Metric::Cc => "cc",
            Metric::Sim => "sim",
            Metric::Nss => "nss",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::AucJudd => "AUC-Judd",
            Metric::Cc => "CC",
            Metric::Sim => "SIM",
            Metric::Nss => "NSS",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub auc_judd: f64,
    pub cc: f64,
    pub sim: f64,
    pub nss: f64,
}

impl MetricScores {
    pub fn new(auc_judd: f64, cc: f64, sim: f64, nss: f64) -> Self {
        Self { auc_judd, cc, sim, nss }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::AucJudd => self.auc_judd,
            Metric::Cc => self.cc,
            Metric::Sim => self.sim,
            Metric::Nss => self.nss,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.auc_judd, self.cc, self.sim, self.nss]
    }
}

fn check_dims(p: &SaliencyFrame, g: &SaliencyFrame) -> Result<(), MetricError> {
    if p.dims() != g.dims() {
        return Err(MetricError::Dimensions(p.dims(), g.dims()));
    }
    Ok(())
}

const LANES: usize = 8;

/// Sum of `f(v)` with independent accumulators so the loop vectorizes.
#[inline]
fn lane_sum(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0; LANES];
    let chunks = values.chunks_exact(LANES);
    let tail: f64 = chunks.remainder().iter().map(|v| f(*v)).sum();
    for c in chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += f(*v);
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Sum of `f(a, b)` over paired values, as `lane_sum`.
#[inline]
fn lane_sum2(xs: &[f64], ys: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [0.0; LANES];
    let (cx, cy) = (xs.chunks_exact(LANES), ys.chunks_exact(LANES));
    let tail: f64 = cx.remainder().iter().zip(cy.remainder()).map(|(a, b)| f(*a, *b)).sum();
    for (a8, b8) in cx.zip(cy) {
        for ((acc, a), b) in acc.iter_mut().zip(a8).zip(b8) {
            *acc += f(*a, *b);
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn abs_max(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let chunks = values.chunks_exact(LANES);
    let tail = chunks.remainder().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for c in chunks {
        for (a, v) in acc.iter_mut().zip(c) {
            *a = a.max(v.abs());
        }
    }
    acc.iter().fold(tail, |m, v| m.max(*v))
}

/// Mean, centred sum of squares and flatness of one map.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    ss: f64,
    flat: bool,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = lane_sum(values, |v| v) / n;
        let ss = lane_sum(values, |v| (v - mean) * (v - mean));
        // flat: spread at rounding-noise level relative to the magnitude
        let flat = values.len() < 2 || ss <= n * (1e-12 * abs_max(values)).powi(2);
        Self { mean, ss, flat }
    }
}

pub fn has_variance(frame: &SaliencyFrame) -> bool {
    !Moments::of(frame.values()).flat
}

/// Pearson correlation over all pixels.
pub fn cc(p: &SaliencyFrame, g: &SaliencyFrame) -> Result<f64, MetricError> {
    check_dims(p, g)?;
    cc_with(p, &Moments::of(p.values()), g)
}

fn cc_with(p: &SaliencyFrame, pm: &Moments, g: &SaliencyFrame) -> Result<f64, MetricError> {
    let gm = Moments::of(g.values());
    if pm.flat || gm.flat {
        return Err(Undefined::ZeroVariance.into());
    }
    let (a, b) = (pm.mean, gm.mean);
    let cov = lane_sum2(p.values(), g.values(), |x, y| (x - a) * (y - b));
    Ok((cov / (pm.ss.sqrt() * gm.ss.sqrt())).clamp(-1.0, 1.0))
}

/// Histogram intersection of the two sum-normalized maps.
pub fn sim(p: &SaliencyFrame, g: &SaliencyFrame) -> Result<f64, MetricError> {
    check_dims(p, g)?;
    let ps = lane_sum(p.values(), |v| v);
    let gs = lane_sum(g.values(), |v| v);
    if !(ps > 0.0 && gs > 0.0) {
        return Err(Undefined::ZeroSum.into());
    }
    let (ip, ig) = (1.0 / ps, 1.0 / gs);
    let s = lane_sum2(p.values(), g.values(), |a, b| (a * ip).min(b * ig));
    Ok(s.clamp(0.0, 1.0))
}

/// Distinct in-bounds fixation pixel indices, sorted.
pub fn fixation_pixels(frame: &SaliencyFrame, fixations: &FrameFixations) -> Result<Vec<usize>, MetricError> {
    let (w, h) = frame.dims();
    let mut idx = Vec::with_capacity(fixations.points.len());
    for &(x, y) in &fixations.points {
        if x as usize >= w || y as usize >= h {
            return Err(MetricError::FixationOutside(x, y, w, h));
        }
        idx.push(y as usize * w + x as usize);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Mean of the standardized map (sample standard deviation) at fixation pixels.
pub fn nss(p: &SaliencyFrame, fixations: &FrameFixations) -> Result<f64, MetricError> {
    let pixels = fixation_pixels(p, fixations)?;
    nss_with(p, &Moments::of(p.values()), &pixels)
}

fn nss_with(p: &SaliencyFrame, pm: &Moments, pixels: &[usize]) -> Result<f64, MetricError> {
    if pixels.is_empty() {
        return Err(Undefined::NoFixations.into());
    }
    if pm.flat {
        return Err(Undefined::ZeroVariance.into());
    }
    let std = (pm.ss / (p.len() - 1) as f64).sqrt();
    let values = p.values();
    let total: f64 = pixels.iter().map(|&i| (values[i] - pm.mean) / std).sum();
    Ok(total / pixels.len() as f64)
}

/// ROC area with the fixation saliency values as thresholds.
///
/// For threshold `t`, TPR is the fraction of fixation pixels with value `>= t`
/// and FPR the fraction of the remaining pixels with value `>= t`. The curve
/// is closed with (0,0) and (1,1) and integrated with the trapezoidal rule.
/// Pixels are binned against the sorted thresholds in one pass, so memory is
/// proportional to the number of thresholds, not to thresholds times pixels.
pub fn auc_judd(p: &SaliencyFrame, fixations: &FrameFixations) -> Result<f64, MetricError> {
    let pixels = fixation_pixels(p, fixations)?;
    auc_with(p, &pixels)
}

/// Buckets over `[lo, hi]` giving a starting guess for the number of
/// thresholds `<= v`; the guess is then corrected by exact comparisons.
struct ThresholdIndex<'a> {
    thresholds: &'a [f64],
    lo: f64,
    scale: f64,
    start: Vec<usize>,
}

impl<'a> ThresholdIndex<'a> {
    const BUCKETS: usize = 1024;

    fn new(thresholds: &'a [f64]) -> Self {
        let (lo, hi) = (thresholds[0], thresholds[thresholds.len() - 1]);
        let scale = if hi > lo { Self::BUCKETS as f64 / (hi - lo) } else { 0.0 };
        let start = (0..=Self::BUCKETS)
            .map(|b| {
                let edge = lo + b as f64 / scale;
                if scale == 0.0 { 0 } else { thresholds.partition_point(|t| *t <= edge) }
            })
            .collect();
        Self { thresholds, lo, scale, start }
    }

    #[inline]
    fn count_le(&self, v: f64) -> usize {
        let t = self.thresholds;
        if v < self.lo {
            return 0;
        }
        let b = ((v - self.lo) * self.scale).min(Self::BUCKETS as f64) as usize;
        let mut c = self.start[b];
        while c < t.len() && t[c] <= v {
            c += 1;
        }
        while c > 0 && t[c - 1] > v {
            c -= 1;
        }
        c
    }
}

fn auc_with(p: &SaliencyFrame, pixels: &[usize]) -> Result<f64, MetricError> {
    let n_fix = pixels.len();
    let n_pix = p.len();
    if n_fix == 0 {
        return Err(Undefined::NoFixations.into());
    }
    if n_fix == n_pix {
        return Err(Undefined::AllPixelsFixated.into());
    }
    let values = p.values();
    let mut thresholds: Vec<f64> = pixels.iter().map(|&i| values[i]).collect();
    thresholds.sort_unstable_by(f64::total_cmp);
    let fix_sorted = thresholds.clone();
    thresholds.dedup();
    let k = thresholds.len();

    // bins[c] counts pixels whose value is >= exactly c of the ascending thresholds
    let mut bins = vec![0usize; k + 1];
    let index = ThresholdIndex::new(&thresholds);
    for v in values {
        bins[index.count_le(*v)] += 1;
    }
    let mut points = Vec::with_capacity(k + 2);
    points.push((0.0, 0.0));
    let mut pix_ge = 0usize;
    let denom_fp = (n_pix - n_fix) as f64;
    for j in (0..k).rev() {
        // pixels with value >= thresholds[j] fall in bins j+1..=k
        pix_ge += bins[j + 1];
        let t = thresholds[j];
        let fix_ge = n_fix - fix_sorted.partition_point(|v| *v < t);
        let tpr = fix_ge as f64 / n_fix as f64;
        let fpr = (pix_ge - fix_ge) as f64 / denom_fp;
        points.push((fpr, tpr));
    }
    points.push((1.0, 1.0));
    let area: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Align-corners bilinear resize.
pub fn resize_prediction(p: &SaliencyFrame, target_w: usize, target_h: usize) -> SaliencyFrame {
    let (sw, sh) = p.dims();
    if (sw, sh) == (target_w, target_h) {
        return p.clone();
    }
    let taps = |src: usize, dst: usize| -> Vec<(usize, usize, f64)> {
        (0..dst)
            .map(|i| {
                let pos = if dst > 1 && src > 1 { i as f64 * (src - 1) as f64 / (dst - 1) as f64 } else { 0.0 };
                let lo = (pos.floor() as usize).min(src - 1);
                let hi = (lo + 1).min(src - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let xs = taps(sw, target_w);
    let ys = taps(sh, target_h);
    let src = p.values();
    let mut out = Vec::with_capacity(target_w * target_h);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push((top + (bottom - top) * fy).max(0.0));
        }
    }
    SaliencyFrame::from_raw(target_w, target_h, out)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    (n > 0).then(|| acc.total() / n as f64)
}

/// Per-frame outcome for each metric, in `Metric::ALL` order.
pub type FrameScores = [Result<f64, Undefined>; 4];

fn lift(r: Result<f64, MetricError>) -> Result<Result<f64, Undefined>, MetricError> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(MetricError::Undefined(u)) => Ok(Err(u)),
        Err(e) => Err(e),
    }
}

/// All four metrics on one frame; the prediction is resized to the ground truth first.
pub fn score_frame(
    pred: &SaliencyFrame,
    gt_map: &SaliencyFrame,
    fixations: &FrameFixations,
) -> Result<FrameScores, MetricError> {
    let resized;
    let pred = if pred.dims() == gt_map.dims() {
        pred
    } else {
        resized = resize_prediction(pred, gt_map.width(), gt_map.height());
        &resized
    };
    check_dims(pred, gt_map)?;
    let pixels = fixation_pixels(pred, fixations)?;
    let moments = Moments::of(pred.values());
    Ok([
        lift(auc_with(pred, &pixels))?,
        lift(cc_with(pred, &moments, gt_map))?,
        lift(sim(pred, gt_map))?,
        lift(nss_with(pred, &moments, &pixels))?,
    ])
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("video {video_id}: prediction has {pred} frames, ground truth has {gt}")]
    FrameCount { video_id: String, pred: usize, gt: usize },
    #[error("video {video_id}: {metric} is undefined on every frame")]
    MetricUndefined { video_id: String, metric: &'static str },
    #[error("video {video_id}, frame {frame}: {source}")]
    Metric { video_id: String, frame: usize, source: MetricError },
    #[error("video {video_id}: {source}")]
    Format { video_id: String, source: FormatError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoEvaluation {
    pub video_id: String,
    pub frames: Vec<FrameScores>,
    /// Mean over defined frames per metric; `None` when no frame was defined.
    pub means: [Option<f64>; 4],
    pub skipped: [usize; 4],
}

impl VideoEvaluation {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Frames skipped for `metric`, grouped by reason.
    pub fn skip_reasons(&self, metric: Metric) -> Vec<(Undefined, usize)> {
        let mut out: Vec<(Undefined, usize)> = Vec::new();
        for f in &self.frames {
            if let Err(u) = f[metric.index()] {
                match out.iter_mut().find(|(r, _)| *r == u) {
                    Some((_, n)) => *n += 1,
                    None => out.push((u, 1)),
                }
            }
        }
        out
    }

    pub fn scores(&self) -> Result<MetricScores, EvalError> {
        let mut v = [0.0; 4];
        for m in Metric::ALL {
            v[m.index()] = self.means[m.index()].ok_or_else(|| EvalError::MetricUndefined {
                video_id: self.video_id.clone(),
                metric: m.label(),
            })?;
        }
        Ok(MetricScores::from_array(v))
    }
}

/// Scores every frame of one video. Frames are evaluated in parallel; the
/// means are reduced sequentially in frame order.
pub fn evaluate_video(
    video_id: &str,
    pred: &dyn FrameSequence,
    gt_maps: &dyn FrameSequence,
    gt_fixations: &[FrameFixations],
) -> Result<VideoEvaluation, EvalError> {
    if pred.len() != gt_maps.len() {
        return Err(EvalError::FrameCount { video_id: video_id.to_string(), pred: pred.len(), gt: gt_maps.len() });
    }
    if gt_fixations.len() != gt_maps.len() {
        return Err(EvalError::FrameCount {
            video_id: video_id.to_string(),
            pred: gt_fixations.len(),
            gt: gt_maps.len(),
        });
    }
    let format_err = |source| EvalError::Format { video_id: video_id.to_string(), source };
    let frames: Vec<FrameScores> = (0..gt_maps.len())
        .into_par_iter()
        .map(|i| {
            let p = pred.frame(i).map_err(format_err)?;
            let g = gt_maps.frame(i).map_err(format_err)?;
            score_frame(&p, &g, &gt_fixations[i]).map_err(|source| EvalError::Metric {
                video_id: video_id.to_string(),
                frame: i,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(summarize(video_id, frames))
}

pub fn summarize(video_id: &str, frames: Vec<FrameScores>) -> VideoEvaluation {
    let mut means = [None; 4];
    let mut skipped = [0; 4];
    for m in Metric::ALL {
        let i = m.index();
        means[i] = compensated_mean(frames.iter().filter_map(|f| f[i].ok()));
        skipped[i] = frames.iter().filter(|f| f[i].is_err()).count();
    }
    VideoEvaluation { video_id: video_id.to_string(), frames, means, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(w: usize, h: usize, v: &[f64]) -> SaliencyFrame {
        SaliencyFrame::new(w, h, v.to_vec()).unwrap()
    }

    fn fix(points: &[(u32, u32)]) -> FrameFixations {
        FrameFixations::new(0, points.to_vec())
    }

    #[test]
    fn cc_examples() {
        let g = frame(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert!((cc(&g, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cc(&frame(2, 2, &[0.0, 1.0, 0.0, 1.0]), &g).unwrap(), 0.0);
        let reflected = g.map(|v| 3.0 - v);
        assert!((cc(&reflected, &g).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cc(&frame(2, 2, &[0.3; 4]), &g),
            Err(MetricError::Undefined(Undefined::ZeroVariance))
        ));
        assert!(matches!(cc(&frame(4, 1, &[0.0, 0.0, 1.0, 1.0]), &g), Err(MetricError::Dimensions(..))));
    }

    #[test]
    fn sim_examples() {
        let g = frame(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!((sim(&g.map(|v| v * 7.0), &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sim(&frame(2, 2, &[1.0, 1.0, 0.0, 0.0]), &frame(2, 2, &[0.0, 0.0, 1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(sim(&frame(2, 2, &[0.5, 0.5, 0.0, 0.0]), &frame(2, 2, &[0.25; 4])).unwrap(), 0.5);
        assert!(matches!(sim(&SaliencyFrame::zeros(2, 2), &g), Err(MetricError::Undefined(Undefined::ZeroSum))));
    }

    #[test]
    fn nss_examples() {
        let p = frame(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(nss(&p, &fix(&[(1, 1)])).unwrap(), 1.5);
        // 4 pixels with mean 1.0
        let p = frame(2, 2, &[0.0, 1.0, 2.0, 1.0]);
        assert_eq!(nss(&p, &fix(&[(1, 0)])).unwrap(), 0.0);
        // antisymmetric around the mean
        assert_eq!(nss(&p, &fix(&[(0, 0), (0, 1)])).unwrap(), 0.0);
        assert!(matches!(nss(&p, &fix(&[])), Err(MetricError::Undefined(Undefined::NoFixations))));
        assert!(matches!(nss(&p, &fix(&[(2, 0)])), Err(MetricError::FixationOutside(..))));
    }

    #[test]
    fn auc_examples() {
        let p = frame(3, 1, &[0.1, 0.9, 0.2]);
        assert_eq!(auc_judd(&p, &fix(&[(1, 0)])).unwrap(), 1.0);
        let flat = frame(3, 3, &[0.4; 9]);
        assert_eq!(auc_judd(&flat, &fix(&[(0, 0), (2, 1)])).unwrap(), 0.5);
        // values 1..9 row-major, fixations on 9 and 5: points (0,0),(0,1/2),(3/7,1),(1,1)
        let ramp = frame(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let got = auc_judd(&ramp, &fix(&[(2, 2), (1, 1)])).unwrap();
        assert!((got - 25.0 / 28.0).abs() < 1e-15);
        let all: Vec<(u32, u32)> = (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).collect();
        assert!(matches!(auc_judd(&ramp, &fix(&all)), Err(MetricError::Undefined(Undefined::AllPixelsFixated))));
        assert!(matches!(auc_judd(&ramp, &fix(&[])), Err(MetricError::Undefined(Undefined::NoFixations))));
    }

    #[test]
    fn duplicate_fixations_collapse() {
        let ramp = frame(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let once = fix(&[(2, 2), (1, 1)]);
        let twice = fix(&[(2, 2), (1, 1), (2, 2)]);
        assert_eq!(auc_judd(&ramp, &once).unwrap(), auc_judd(&ramp, &twice).unwrap());
        assert_eq!(nss(&ramp, &once).unwrap(), nss(&ramp, &twice).unwrap());
    }

    #[test]
    fn resize_examples() {
        let p = frame(2, 1, &[0.0, 1.0]);
        let r = resize_prediction(&p, 4, 1);
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (a, b) in r.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(resize_prediction(&p, 2, 1), p);
        let c = resize_prediction(&frame(3, 2, &[0.7; 6]), 5, 7);
        assert_eq!(c.dims(), (5, 7));
        assert!(c.values().iter().all(|v| (*v - 0.7).abs() < 1e-15));
        let single = resize_prediction(&frame(1, 1, &[2.0]), 3, 2);
        assert_eq!(single.values(), &[2.0; 6]);
    }

    #[test]
    fn evaluate_identity_and_constant_predictions() {
        let gt: Vec<SaliencyFrame> = (0..3)
            .map(|i| SaliencyFrame::from_fn(8, 6, |x, y| ((x + i) % 8 + y) as f64))
            .collect();
        let fixations: Vec<FrameFixations> = (0..3).map(|i| FrameFixations::new(i, vec![(7, 5), (2, 3)])).collect();
        let eval = evaluate_video("clip", &gt, &gt, &fixations).unwrap();
        let s = eval.scores().unwrap();
        assert!((s.cc - 1.0).abs() < 1e-12 && (s.sim - 1.0).abs() < 1e-12);
        assert_eq!(eval.skipped, [0; 4]);

        let constant = vec![SaliencyFrame::from_fn(4, 3, |_, _| 0.2); 3];
        let eval = evaluate_video("clip", &constant, &gt, &fixations).unwrap();
        assert_eq!(eval.means[Metric::AucJudd.index()], Some(0.5));
        assert_eq!(eval.means[Metric::Cc.index()], None);
        assert_eq!(eval.means[Metric::Nss.index()], None);
        assert_eq!(eval.skipped[Metric::Cc.index()], 3);
        assert_eq!(eval.skip_reasons(Metric::Nss), vec![(Undefined::ZeroVariance, 3)]);
        assert!(matches!(eval.scores(), Err(EvalError::MetricUndefined { metric: "CC", .. })));

        let short = gt[..2].to_vec();
        let err = evaluate_video("clip", &short, &gt, &fixations).unwrap_err();
        assert_eq!(err.to_string(), "video clip: prediction has 2 frames, ground truth has 3");
    }

    #[test]
    fn compensated_mean_beats_naive_sum() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_mean(values), Some(0.5));
        assert_eq!(compensated_mean(std::iter::empty()), None);
    }
}
