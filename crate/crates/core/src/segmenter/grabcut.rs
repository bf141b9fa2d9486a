//! GrabCut-style foreground extraction inside a box.
//!
//! Pixels outside the box are fixed background. Inside, foreground and
//! background colour models (Gaussian mixtures) and the labelling are
//! optimized alternately, the labelling step being an exact graph cut.
//!
//! The minimized energy is
//!
//! ```text
//! E(a, theta) = sum_p min_k D(a_p, k, theta, z_p)
//!             + sum_{p~q} lambda * exp(-beta |z_p - z_q|^2) / dist(p, q) * [a_p != a_q]
//! ```
//!
//! over all image pixels, with `D` the negative log of the weighted
//! component density. Each step (model refit, graph cut) is a descent step,
//! so the recorded energy trace is non-increasing.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gmm::{Color, Gmm};
use super::{ForegroundMap, SegmentError};
use crate::flow::{FlowNetwork, MaxFlowSolver, SolverRegistry};
use crate::geometry::{BBox, PixelRect};

#[derive(Debug, Clone, PartialEq)]
pub struct GrabCutParams {
    pub iterations: usize,
    /// Mixture components per colour model.
    pub components: usize,
    pub lambda_smooth: f64,
    pub covariance_epsilon: f64,
    pub kmeans_iterations: usize,
    /// Registered max-flow solver name.
    pub solver: String,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            iterations: 5,
            components: 5,
            lambda_smooth: 50.0,
            covariance_epsilon: 0.01,
            kmeans_iterations: 10,
            solver: "dinic".to_string(),
        }
    }
}

impl GrabCutParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.components == 0 {
            return Err(SegmentError::InvalidParam("components must be at least 1".into()));
        }
        if !(self.lambda_smooth.is_finite() && self.lambda_smooth >= 0.0) {
            return Err(SegmentError::InvalidParam("lambda_smooth must be finite and >= 0".into()));
        }
        if !(self.covariance_epsilon.is_finite() && self.covariance_epsilon > 0.0) {
            return Err(SegmentError::InvalidParam("covariance_epsilon must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GrabCutOutcome {
    pub region: PixelRect,
    pub foreground: ForegroundMap,
    /// Energy before the first iteration and after each one.
    pub energies: Vec<f64>,
}

pub fn grabcut(
    image: &RgbImage,
    bbox: &BBox,
    params: &GrabCutParams,
    seed: u64,
) -> Result<GrabCutOutcome, SegmentError> {
    let solver = SolverRegistry::with_builtins()
        .create(&params.solver)
        .map_err(|e| SegmentError::InvalidParam(e.to_string()))?;
    grabcut_with(image, bbox, params, seed, solver.as_ref())
}

pub fn grabcut_with(
    image: &RgbImage,
    bbox: &BBox,
    params: &GrabCutParams,
    seed: u64,
    solver: &dyn MaxFlowSolver,
) -> Result<GrabCutOutcome, SegmentError> {
    params.validate()?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let region = bbox.pixel_span(w, h).ok_or(SegmentError::EmptyRegion)?;
    if region.len() < params.components {
        return Err(SegmentError::TooSmall { pixels: region.len(), components: params.components });
    }
    let all_foreground = |energies| GrabCutOutcome {
        region,
        foreground: ForegroundMap::filled(region.width(), region.height(), true),
        energies,
    };
    if params.iterations == 0 {
        return Ok(all_foreground(Vec::new()));
    }
    if region.len() == w * h {
        return Err(SegmentError::NoBackground);
    }
    if is_uniform(image) {
        return Ok(all_foreground(Vec::new()));
    }

    let scene = Scene::new(image, region, params.lambda_smooth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.components;
    let eps = params.covariance_epsilon;

    let mut alpha = vec![true; region.len()];
    let mut fg = Gmm::fit_kmeans(&scene.samples(&alpha, true), k, params.kmeans_iterations, eps, &mut rng);
    let mut bg = Gmm::fit_kmeans(&scene.samples(&alpha, false), k, params.kmeans_iterations, eps, &mut rng);
    let mut energies = vec![scene.energy(&alpha, &fg, &bg)];

    for _ in 0..params.iterations {
        // Component reassignment and parameter refit; the refit is kept
        // only if it does not raise the data term.
        refit(&mut fg, &scene.samples(&alpha, true), k, eps);
        refit(&mut bg, &scene.samples(&alpha, false), k, eps);

        let net = scene.network(&fg, &bg);
        let cut = solver.solve(&net);
        alpha.copy_from_slice(&cut.source_side[..region.len()]);
        energies.push(scene.energy(&alpha, &fg, &bg));
    }

    Ok(GrabCutOutcome {
        region,
        foreground: ForegroundMap::new(region.width(), region.height(), alpha)
            .expect("label vector matches region"),
        energies,
    })
}

fn refit(gmm: &mut Gmm, samples: &[Color], k: usize, eps: f64) {
    if samples.is_empty() {
        return;
    }
    let assignment = gmm.assign(samples);
    let candidate = Gmm::from_assignments(samples, &assignment, k, eps);
    if candidate.total_cost(samples) <= gmm.total_cost(samples) {
        *gmm = candidate;
    }
}

fn is_uniform(image: &RgbImage) -> bool {
    let mut pixels = image.pixels();
    match pixels.next() {
        Some(first) => pixels.all(|p| p == first),
        None => true,
    }
}

/// Pixel colours and pairwise weights for one box.
struct Scene {
    region: PixelRect,
    inside: Vec<Color>,
    outside: Vec<Color>,
    /// Pairwise weights between neighbouring box pixels (local indices).
    pairs: Vec<(u32, u32, f64)>,
    /// Per box pixel: summed weight to fixed-background neighbours outside.
    border: Vec<f64>,
}

const OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

impl Scene {
    fn new(image: &RgbImage, region: PixelRect, lambda: f64) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let color = |x: usize, y: usize| -> Color {
            let p = image.get_pixel(x as u32, y as u32).0;
            [p[0] as f64, p[1] as f64, p[2] as f64]
        };

        let mut inside = Vec::with_capacity(region.len());
        for y in region.y0..region.y1 {
            for x in region.x0..region.x1 {
                inside.push(color(x, y));
            }
        }
        let mut outside = Vec::with_capacity(w * h - region.len());
        for y in 0..h {
            for x in 0..w {
                if !region.contains(x, y) {
                    outside.push(color(x, y));
                }
            }
        }

        // Collect every neighbour pair touching the box once, with squared
        // colour distance and geometric distance.
        let rw = region.width();
        let mut raw_pairs: Vec<(u32, u32, f64, f64)> = Vec::new();
        let mut raw_border: Vec<(u32, f64, f64)> = Vec::new();
        for ly in 0..region.height() {
            for lx in 0..rw {
                let (x, y) = (region.x0 + lx, region.y0 + ly);
                let p = (ly * rw + lx) as u32;
                let zp = inside[p as usize];
                for (dx, dy) in OFFSETS {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    let dist = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                    let zq = color(nx, ny);
                    let d2 = (zp[0] - zq[0]).powi(2) + (zp[1] - zq[1]).powi(2) + (zp[2] - zq[2]).powi(2);
                    if region.contains(nx, ny) {
                        let q = ((ny - region.y0) * rw + (nx - region.x0)) as u32;
                        if p < q {
                            raw_pairs.push((p, q, d2, dist));
                        }
                    } else {
                        raw_border.push((p, d2, dist));
                    }
                }
            }
        }

        let count = raw_pairs.len() + raw_border.len();
        let mean = if count == 0 {
            0.0
        } else {
            (raw_pairs.iter().map(|t| t.2).sum::<f64>() + raw_border.iter().map(|t| t.1).sum::<f64>())
                / count as f64
        };
        let beta = if mean > 0.0 { 1.0 / (2.0 * mean) } else { 0.0 };
        let weight = |d2: f64, dist: f64| lambda * (-beta * d2).exp() / dist;

        let pairs = raw_pairs.into_iter().map(|(p, q, d2, dist)| (p, q, weight(d2, dist))).collect();
        let mut border = vec![0.0; region.len()];
        for (p, d2, dist) in raw_border {
            border[p as usize] += weight(d2, dist);
        }

        Self { region, inside, outside, pairs, border }
    }

    fn samples(&self, alpha: &[bool], foreground: bool) -> Vec<Color> {
        let picked = self.inside.iter().zip(alpha).filter(|(_, &a)| a == foreground).map(|(z, _)| *z);
        if foreground {
            picked.collect()
        } else {
            self.outside.iter().copied().chain(picked).collect()
        }
    }

    fn energy(&self, alpha: &[bool], fg: &Gmm, bg: &Gmm) -> f64 {
        let mut e: f64 = self.outside.iter().map(|z| bg.cost(z)).sum();
        for (p, z) in self.inside.iter().enumerate() {
            e += if alpha[p] { fg.cost(z) + self.border[p] } else { bg.cost(z) };
        }
        for &(p, q, w) in &self.pairs {
            if alpha[p as usize] != alpha[q as usize] {
                e += w;
            }
        }
        e
    }

    /// Source side = foreground. A pixel on the source side pays its
    /// foreground cost through the sink arc and vice versa.
    fn network(&self, fg: &Gmm, bg: &Gmm) -> FlowNetwork {
        let n = self.region.len();
        let (source, sink) = (n, n + 1);
        let mut net = FlowNetwork::new(n + 2, source, sink).expect("distinct terminals");
        for (p, z) in self.inside.iter().enumerate() {
            let cf = fg.cost(z) + self.border[p];
            let cb = bg.cost(z);
            let m = cf.min(cb);
            if cb > m {
                net.add_arc(source, p, cb - m).expect("finite t-link");
            }
            if cf > m {
                net.add_arc(p, sink, cf - m).expect("finite t-link");
            }
        }
        for &(p, q, w) in &self.pairs {
            net.add_edge(p as usize, q as usize, w, w).expect("finite n-link");
        }
        net
    }
}
