use crosstask::flow::{FlowNetwork, SolverRegistry};
use crosstask::geometry::BBox;
use crosstask::segmenter::{grabcut, GrabCutParams};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const GRAPHS: usize = 200;
const IMAGES: usize = 20;

/// Minimum s-t cut by enumerating every side assignment of the inner nodes.
/// Node 0 is the source and node 1 the sink.
fn brute_min_cut(n: usize, arcs: &[(usize, usize, f64)]) -> f64 {
    let inner = n - 2;
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << inner) {
        let source_side = |v: usize| v == 0 || (v >= 2 && subset >> (v - 2) & 1 == 1);
        let cut: f64 = arcs.iter().filter(|(u, v, _)| source_side(*u) && !source_side(*v)).map(|a| a.2).sum();
        best = best.min(cut);
    }
    best
}

fn max_flow_checks() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf10_4000);
    let registry = SolverRegistry::with_builtins();
    let names: Vec<&str> = registry.names().collect();
    for g in 0..GRAPHS {
        let inner = rng.random_range(0..=12);
        let n = inner + 2;
        let mut arcs = Vec::new();
        let mut net = FlowNetwork::new(n, 0, 1).unwrap();
        let density = rng.random_range(0.15..0.6);
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(density) {
                    let c = rng.random_range(0..=20) as f64;
                    net.add_arc(u, v, c).unwrap();
                    arcs.push((u, v, c));
                }
            }
        }
        let expected = brute_min_cut(n, &arcs);
        for name in &names {
            let flow = registry.create(name).unwrap().solve(&net);
            if flow.value != expected {
                return Err(format!("graph {g}: {name} found {} but the minimum cut is {expected}", flow.value));
            }
            let cut = net.cut_capacity(&flow.source_side);
            if cut != expected || !flow.source_side[0] || flow.source_side[1] {
                return Err(format!("graph {g}: {name} returned a cut of capacity {cut}, expected {expected}"));
            }
        }
    }
    Ok(format!("{GRAPHS} graphs x {} solvers exact", names.len()))
}

fn noisy(rng: &mut ChaCha8Rng, base: [u8; 3], spread: i32) -> Rgb<u8> {
    let mut px = [0u8; 3];
    for (p, b) in px.iter_mut().zip(base) {
        *p = (b as i32 + rng.random_range(-spread..=spread)).clamp(0, 255) as u8;
    }
    Rgb(px)
}

fn energy_checks() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9ab_c0de);
    let mut steps = 0;
    for i in 0..IMAGES {
        let (w, h) = (rng.random_range(24..=48u32), rng.random_range(24..=48u32));
        let bg: [u8; 3] = rng.random();
        let fg: [u8; 3] = rng.random();
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (rx, ry) = (rng.random_range(4.0..w as f64 / 3.0), rng.random_range(4.0..h as f64 / 3.0));
        let spread = rng.random_range(0..=40);
        let img = RgbImage::from_fn(w, h, |x, y| {
            let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
            noisy(&mut rng, if dx * dx + dy * dy <= 1.0 { fg } else { bg }, spread)
        });
        let margin = rng.random_range(1.0..4.0);
        let bbox = BBox::new(
            (cx - rx - margin).max(0.0),
            (cy - ry - margin).max(0.0),
            (cx + rx + margin).min(w as f64 - 1.0),
            (cy + ry + margin).min(h as f64 - 1.0),
        )
        .unwrap();
        let out = grabcut(&img, &bbox, &GrabCutParams::default(), i as u64).map_err(|e| format!("image {i}: {e}"))?;
        for (t, pair) in out.energies.windows(2).enumerate() {
            // Relative slack for summation-order rounding only.
            let slack = 1e-9 * pair[0].abs().max(1.0);
            if pair[1] > pair[0] + slack {
                return Err(format!("image {i}: energy rose at iteration {} ({} -> {})", t + 1, pair[0], pair[1]));
            }
            steps += 1;
        }
    }
    Ok(format!("{IMAGES} images, {steps} iterations non-increasing"))
}

/// A red cross on a blue field; the box leaves a background border.
fn separable_fixture() -> Result<String, String> {
    let (w, h) = (32u32, 28u32);
    let object = |x: u32, y: u32| ((12..20).contains(&x) && (6..22).contains(&y)) || ((8..24).contains(&x) && (11..17).contains(&y));
    let img = RgbImage::from_fn(w, h, |x, y| if object(x, y) { Rgb([220, 30, 30]) } else { Rgb([30, 60, 200]) });
    let bbox = BBox::new(5.0, 3.0, 27.0, 25.0).unwrap();
    let out = grabcut(&img, &bbox, &GrabCutParams::default(), 42).map_err(|e| e.to_string())?;
    let r = out.region;
    let mut wrong = 0;
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            if out.foreground.get(x - r.x0, y - r.y0) != object(x as u32, y as u32) {
                wrong += 1;
            }
        }
    }
    if wrong > 0 {
        return Err(format!("separable fixture: {wrong} pixels mislabelled"));
    }
    Ok("separable fixture exact".into())
}

pub fn flow_and_grabcut() -> Outcome {
    let a = max_flow_checks()?;
    let b = energy_checks()?;
    let c = separable_fixture()?;
    Ok(format!("{a}; {b}; {c}"))
}
