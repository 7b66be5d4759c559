//! Input generators for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::types::{CoordSpace, DisplayGeometry, FrameFixations, MouseTrack, Rect, SaliencyFrame, TrackSample};

/// Sum of a few random blobs plus noise, like a model prediction.
pub fn blob_frame(width: usize, height: usize, seed: u64) -> SaliencyFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| (rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64), rng.random_range(5.0..40.0)))
        .collect();
    let noise: Vec<f64> = (0..width * height).map(|_| rng.random_range(0.0..0.05)).collect();
    SaliencyFrame::from_fn(width, height, |x, y| {
        let b: f64 = blobs
            .iter()
            .map(|&(cx, cy, s)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        b + noise[y * width + x]
    })
}

pub fn fixations(width: usize, height: usize, count: usize, seed: u64) -> FrameFixations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count).map(|_| (rng.random_range(0..width as u32), rng.random_range(0..height as u32))).collect();
    FrameFixations::new(0, points)
}

/// A jittery 60 Hz cursor track in video coordinates.
pub fn cursor_track(width: u32, height: u32, duration_ms: f64, seed: u64) -> MouseTrack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_ms / 1000.0 * 60.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * 1000.0 / 60.0 + rng.random_range(0.0..4.0);
            TrackSample::new(t, rng.random_range(0.0..f64::from(width)), rng.random_range(0.0..f64::from(height)))
        })
        .collect();
    let geometry = DisplayGeometry::new(width, height, Rect { x: 0, y: 0, w: width, h: height }).expect("non-empty screen");
    MouseTrack::new("bench", "clip", CoordSpace::Video { width, height }, geometry, samples).expect("valid track")
}
