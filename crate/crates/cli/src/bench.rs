//! Benchmark harness: fixed, seeded fixtures and median wall-clock timings
//! for refinement and GrabCut.

use std::time::{Duration, Instant};

use crosstask::geometry::{BBox, ScoredBox};
use crosstask::mask::SemanticMask;
use crosstask::refine::{refine_from_mask, RefinementParams};
use crosstask::segmenter::grabcut::{grabcut, GrabCutParams};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REFINE_BUDGET: Duration = Duration::from_millis(50);
pub const GRABCUT_BUDGET: Duration = Duration::from_secs(5);

pub struct RefineFixture {
    pub mask: SemanticMask,
    pub predictions: Vec<ScoredBox>,
}

/// 640x480 mask with five classes, up to eight fragments each, and 50
/// predictions jittered around the objects.
pub fn refine_fixture(seed: u64) -> RefineFixture {
    let (w, h) = (640usize, 480usize);
    let num_classes = 20usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![0u8; w * h];
    let mut objects = Vec::new();
    for category in 1..=5u8 {
        let count = rng.random_range(1..=3);
        let mut fragments = 0;
        for _ in 0..count {
            let ow = rng.random_range(40..160);
            let oh = rng.random_range(40..160);
            let x0 = rng.random_range(0..w - ow);
            let y0 = rng.random_range(0..h - oh);
            // A vertical gap cuts some objects into pieces.
            let pieces = rng.random_range(1..=3).min(8 - fragments);
            fragments += pieces;
            let piece_w = ow / pieces;
            for y in y0..y0 + oh {
                for x in x0..x0 + ow {
                    let within = (x - x0) % piece_w.max(1);
                    if pieces > 1 && (within >= piece_w.saturating_sub(3) || x - x0 >= piece_w * pieces) {
                        continue;
                    }
                    labels[y * w + x] = category;
                }
            }
            objects.push((category, x0 as f64, y0 as f64, (x0 + ow) as f64, (y0 + oh) as f64));
        }
    }
    let mask = SemanticMask::new(w, h, labels).expect("valid fixture mask");

    let mut predictions = Vec::with_capacity(50);
    while predictions.len() < 50 {
        let &(category, x0, y0, x1, y1) = &objects[rng.random_range(0..objects.len())];
        let jitter = |rng: &mut ChaCha8Rng, v: f64, span: f64| v + rng.random_range(-0.15..0.15) * span;
        let (bw, bh) = (x1 - x0, y1 - y0);
        let a = jitter(&mut rng, x0, bw).clamp(0.0, w as f64 - 2.0);
        let b = jitter(&mut rng, y0, bh).clamp(0.0, h as f64 - 2.0);
        let c = jitter(&mut rng, x1, bw).clamp(a + 1.0, w as f64);
        let d = jitter(&mut rng, y1, bh).clamp(b + 1.0, h as f64);
        let bbox = BBox::new(a, b, c, d).expect("non-degenerate");
        let mut scores: Vec<f64> = (0..num_classes).map(|_| rng.random_range(0.0..0.05)).collect();
        let score = rng.random_range(0.3..1.0);
        scores[category as usize - 1] = score;
        predictions.push(ScoredBox::new(bbox, category, scores, score).expect("valid scores"));
    }
    RefineFixture { mask, predictions }
}

/// Noisy two-tone 640x480 image with a 320x240 box around an ellipse.
pub fn grabcut_fixture(seed: u64) -> (RgbImage, BBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (640u32, 480u32);
    let (cx, cy, rx, ry) = (320.0, 240.0, 130.0, 95.0);
    let img = RgbImage::from_fn(w, h, |x, y| {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        let base: [i32; 3] = if dx * dx + dy * dy <= 1.0 { [200, 60, 50] } else { [40, 110, 170] };
        let mut px = [0u8; 3];
        for (p, b) in px.iter_mut().zip(base) {
            *p = (b + rng.random_range(-25..=25)).clamp(0, 255) as u8;
        }
        Rgb(px)
    });
    (img, BBox::new(160.0, 120.0, 480.0, 360.0).expect("fixed box"))
}

pub fn median(mut samples: Vec<Duration>) -> Duration {
    assert!(!samples.is_empty(), "median of no samples");
    samples.sort();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

pub fn time_median<F: FnMut()>(runs: usize, mut f: F) -> Duration {
    f();
    median(
        (0..runs.max(1))
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed()
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct BenchResult {
    pub refine_median: Duration,
    pub grabcut_median: Duration,
}

impl BenchResult {
    pub fn refine_ok(&self) -> bool {
        self.refine_median < REFINE_BUDGET
    }

    pub fn grabcut_ok(&self) -> bool {
        self.grabcut_median < GRABCUT_BUDGET
    }
}

pub fn run_benchmarks(refine_runs: usize, grabcut_runs: usize, seed: u64) -> BenchResult {
    let fx = refine_fixture(seed);
    let params = RefinementParams::default();
    let refine_median = time_median(refine_runs, || {
        std::hint::black_box(refine_from_mask(&fx.mask, &fx.predictions, &params).expect("valid params"));
    });
    let (img, bbox) = grabcut_fixture(seed);
    let gc = GrabCutParams::default();
    let grabcut_median = time_median(grabcut_runs, || {
        std::hint::black_box(grabcut(&img, &bbox, &gc, seed).expect("fixture segments"));
    });
    BenchResult { refine_median, grabcut_median }
}
