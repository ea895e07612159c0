//! Single-stream inference latency and throughput measurement.
//!
//! FPS is defined as `1000 / mean_latency_ms`: the reciprocal of mean
//! synchronous per-frame latency, with no pipelining credit. Warmup frames
//! run first and are excluded. Frames are materialized before the timed loop
//! so generation cost never pollutes the measurement.

use std::path::PathBuf;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::read_ppm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Where benchmark frames come from. Frames are raw `[H, W, 3]` images with
/// values in `[0, 255]`, already sized for the model under test.
#[derive(Debug, Clone)]
pub enum FrameSource {
    /// Seeded uniform noise of the given size.
    Synthetic { h: usize, w: usize, seed: u64 },
    /// `.ppm` files from a directory, sorted, repeated cyclically if the
    /// benchmark needs more frames than the directory holds.
    Directory(PathBuf),
}

impl FrameSource {
    /// Materializes `count` frames.
    pub fn frames(&self, count: usize) -> Result<Vec<Tensor>> {
        match self {
            FrameSource::Synthetic { h, w, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..count)
                    .map(|_| {
                        let data: Vec<f32> =
                            (0..h * w * 3).map(|_| rng.random_range(0..=255) as f32).collect();
                        Tensor::new(&[*h, *w, 3], data).expect("finite noise")
                    })
                    .collect())
            }
            FrameSource::Directory(dir) => {
                let mut paths: Vec<_> = std::fs::read_dir(dir)?
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("ppm"))
                    .collect();
                paths.sort();
                if paths.is_empty() {
                    return Err(Error::Bench(format!(
                        "no .ppm frames in {}",
                        dir.display()
                    )));
                }
                let mut frames = Vec::with_capacity(count);
                for i in 0..count {
                    frames.push(read_ppm(&paths[i % paths.len()])?);
                }
                Ok(frames)
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            FrameSource::Synthetic { seed, .. } => *seed,
            FrameSource::Directory(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub mean_latency_ms: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub avg_fps: f64,
    pub warmup_frames: usize,
    pub seed: u64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Times `per_frame` over already-materialized frames. The first `warmup`
/// frames run untimed; the rest are measured with a monotonic clock.
/// `per_frame` is the full inference path: normalize, forward, argmax.
pub fn run_benchmark_frames<F>(
    mut per_frame: F,
    frames: &[Tensor],
    warmup: usize,
    seed: u64,
) -> Result<BenchReport>
where
    F: FnMut(&Tensor) -> Result<usize>,
{
    if frames.len() <= warmup {
        return Err(Error::Bench(format!(
            "no frames to measure: {} total, {warmup} warmup",
            frames.len()
        )));
    }
    for frame in &frames[..warmup] {
        per_frame(frame)?;
    }
    let measured = &frames[warmup..];
    let mut latencies_ms = Vec::with_capacity(measured.len());
    for frame in measured {
        let start = Instant::now();
        per_frame(frame)?;
        latencies_ms.push(start.elapsed().as_secs_f64() * 1000.0);
    }
    let mean = latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64;
    let mut sorted = latencies_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BenchReport {
        frames: measured.len(),
        mean_latency_ms: mean,
        p50: percentile(&sorted, 50.0),
        p95: percentile(&sorted, 95.0),
        p99: percentile(&sorted, 99.0),
        avg_fps: 1000.0 / mean,
        warmup_frames: warmup,
        seed,
    })
}

/// Convenience over [`run_benchmark_frames`]: materializes
/// `warmup + frame_count` frames from `source` first.
pub fn run_benchmark<F>(
    per_frame: F,
    source: &FrameSource,
    frame_count: usize,
    warmup: usize,
) -> Result<BenchReport>
where
    F: FnMut(&Tensor) -> Result<usize>,
{
    if frame_count == 0 {
        return Err(Error::Bench("no frames to measure after warmup".into()));
    }
    let frames = source.frames(warmup + frame_count)?;
    run_benchmark_frames(per_frame, &frames, warmup, source.seed())
}

/// Spins until `ms` milliseconds have elapsed. Used by calibration tests.
pub fn busy_wait_ms(ms: f64) {
    let start = Instant::now();
    while start.elapsed().as_secs_f64() * 1000.0 < ms {
        std::hint::spin_loop();
    }
}
