use crosstask::geometry::{BBox, ScoredBox};
use crosstask::mask::SemanticMask;
use crosstask::refine::{refine, refine_from_mask, Origin, RefinedBox, RefinementParams, Reference};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::refine_oracle::{self as oracle, Pred, Rect, Tag};
use crate::Outcome;

pub const INSTANCES: usize = 1500;
const NUM_CLASSES: usize = 5;

struct Instance {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    preds: Vec<Pred>,
}

fn half(v: f64) -> f64 {
    (v * 2.0).round() / 2.0
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let width = rng.random_range(24..=128);
        let height = rng.random_range(24..=128);
        let mut labels = vec![0u8; width * height];
        let classes: Vec<u8> = (1..=NUM_CLASSES as u8).filter(|_| rng.random_bool(0.5)).collect();
        for &c in &classes {
            for _ in 0..rng.random_range(1..=5) {
                let w = rng.random_range(2..=(width / 3).max(3));
                let h = rng.random_range(2..=(height / 3).max(3));
                let x0 = rng.random_range(0..width - w);
                let y0 = rng.random_range(0..height - h);
                // Occasionally an abutting second instance, forming one
                // multi-instance component.
                let extra = rng.random_bool(0.3).then(|| rng.random_range(2..=w.max(3)));
                for y in y0..y0 + h {
                    for x in x0..(x0 + w + extra.unwrap_or(0)).min(width) {
                        labels[y * width + x] = c;
                    }
                }
            }
        }
        if rng.random_bool(0.1) {
            for _ in 0..rng.random_range(1..20) {
                let i = rng.random_range(0..labels.len());
                labels[i] = 255;
            }
        }
        let refs = oracle::components(width, height, &labels);
        let too_many = (1..=NUM_CLASSES as u8).any(|c| refs.iter().filter(|r| r.1 == c).count() > 6);
        if too_many {
            continue;
        }
        let preds = random_predictions(rng, width, height, &refs);
        return Instance { width, height, labels, preds };
    }
}

fn random_predictions(rng: &mut ChaCha8Rng, width: usize, height: usize, refs: &[(Rect, u8)]) -> Vec<Pred> {
    let (wf, hf) = (width as f64, height as f64);
    let n = rng.random_range(0..=30);
    let mut preds = Vec::with_capacity(n);
    while preds.len() < n {
        let (rect, cat) = if refs.is_empty() || rng.random_bool(0.15) {
            let x0 = half(rng.random_range(0.0..wf - 1.0));
            let y0 = half(rng.random_range(0.0..hf - 1.0));
            let x1 = half(rng.random_range(x0 + 0.5..=wf));
            let y1 = half(rng.random_range(y0 + 0.5..=hf));
            (Rect { x0, y0, x1, y1 }, rng.random_range(1..=NUM_CLASSES as u8))
        } else {
            let (r, c) = refs[rng.random_range(0..refs.len())];
            let (w, h) = (r.x1 - r.x0, r.y1 - r.y0);
            let jit = |rng: &mut ChaCha8Rng, span: f64, amount: f64| half(rng.random_range(-amount..=amount) * span);
            let mut b = match rng.random_range(0..5) {
                // Near copy.
                0 => Rect {
                    x0: r.x0 + jit(rng, w, 0.08),
                    y0: r.y0 + jit(rng, h, 0.08),
                    x1: r.x1 + jit(rng, w, 0.08),
                    y1: r.y1 + jit(rng, h, 0.08),
                },
                // A vertical or horizontal part of the reference.
                1 => {
                    let f = rng.random_range(0.25..0.75);
                    match rng.random_range(0..4) {
                        0 => Rect { x1: half(r.x0 + f * w), ..r },
                        1 => Rect { x0: half(r.x0 + f * w), ..r },
                        2 => Rect { y1: half(r.y0 + f * h), ..r },
                        _ => Rect { y0: half(r.y0 + f * h), ..r },
                    }
                }
                // Union with other same-class references.
                2 => {
                    let mut u = r;
                    for (o, oc) in refs {
                        if *oc == c && rng.random_bool(0.6) {
                            u = Rect { x0: u.x0.min(o.x0), y0: u.y0.min(o.y0), x1: u.x1.max(o.x1), y1: u.y1.max(o.y1) };
                        }
                    }
                    u
                }
                3 => r,
                _ => Rect {
                    x0: r.x0 + jit(rng, w, 0.4),
                    y0: r.y0 + jit(rng, h, 0.4),
                    x1: r.x1 + jit(rng, w, 0.4),
                    y1: r.y1 + jit(rng, h, 0.4),
                },
            };
            b.x0 = b.x0.clamp(0.0, wf - 0.5);
            b.y0 = b.y0.clamp(0.0, hf - 0.5);
            b.x1 = b.x1.clamp(b.x0 + 0.5, wf);
            b.y1 = b.y1.clamp(b.y0 + 0.5, hf);
            let cat = if rng.random_bool(0.85) { c } else { rng.random_range(1..=NUM_CLASSES as u8) };
            (b, cat)
        };
        let mut scores: Vec<f64> = (0..NUM_CLASSES)
            .map(|_| if rng.random_bool(0.2) { rng.random_range(0.0..1.0) } else { rng.random_range(0.0..0.1) })
            .collect();
        // Coarse score levels make exact ties common.
        let main = if rng.random_bool(0.3) {
            [0.05, 0.3, 0.45, 0.6, 0.8, 0.95][rng.random_range(0..6)]
        } else {
            rng.random_range(0.0..1.0)
        };
        scores[cat as usize - 1] = main;
        preds.push(Pred { rect, category: cat, scores, score: main });
    }
    preds
}

fn to_scored(p: &Pred) -> ScoredBox {
    ScoredBox::new(BBox::new(p.rect.x0, p.rect.y0, p.rect.x1, p.rect.y1).unwrap(), p.category, p.scores.clone(), p.score)
        .unwrap()
}

fn tag(o: Origin) -> Tag {
    match o {
        Origin::Split => Tag::Split,
        Origin::Merge => Tag::Merge,
        Origin::Add => Tag::Add,
        Origin::Leftover => Tag::Leftover,
    }
}

type Key = ([u64; 4], u8, u64, Tag);

fn key_prod(b: &RefinedBox) -> Key {
    (b.bbox.coords().map(f64::to_bits), b.category, b.confidence.to_bits(), tag(b.origin))
}

fn key_oracle(b: &oracle::Out) -> Key {
    ([b.rect.x0, b.rect.y0, b.rect.x1, b.rect.y1].map(f64::to_bits), b.category, b.conf.to_bits(), b.tag)
}

pub fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let params = RefinementParams::default();
    let mut mismatches = Vec::new();
    let mut origin_counts = [0usize; 4];
    for i in 0..INSTANCES {
        let inst = random_instance(&mut rng);
        let refs = oracle::components(inst.width, inst.height, &inst.labels);
        let expected = oracle::refine(&refs, &inst.preds);

        let mask = SemanticMask::new(inst.width, inst.height, inst.labels.clone()).unwrap();
        let mut scored: Vec<ScoredBox> = inst.preds.iter().map(to_scored).collect();
        scored.shuffle(&mut rng);
        let actual = refine_from_mask(&mask, &scored, &params).map_err(|e| e.to_string())?;

        let mut a: Vec<Key> = actual.iter().map(key_prod).collect();
        let mut e: Vec<Key> = expected.iter().map(key_oracle).collect();
        a.sort();
        e.sort();
        if a != e {
            mismatches.push(i);
        }
        for b in &actual {
            origin_counts[b.origin as usize] += 1;
        }
    }
    ensure!(mismatches.is_empty(), "{} of {INSTANCES} instances differ (first: {:?})", mismatches.len(), &mismatches[..mismatches.len().min(5)]);
    ensure!(origin_counts.iter().all(|&c| c > 0), "some origin never produced: {origin_counts:?}");
    Ok(format!(
        "{INSTANCES} instances, 0 mismatches (split {}, merge {}, add {}, leftover {})",
        origin_counts[0], origin_counts[1], origin_counts[2], origin_counts[3]
    ))
}

fn close(a: &RefinedBox, coords: [f64; 4], category: u8, conf: f64, origin: Origin) -> bool {
    a.bbox.coords().iter().zip(coords).all(|(x, y)| (x - y).abs() <= 1e-9)
        && a.category == category
        && (a.confidence - conf).abs() <= 1e-9
        && a.origin == origin
        && !a.train_classification
}

pub fn hand_traced() -> Outcome {
    let p = RefinementParams::default();
    let b = |x0, y0, x1, y1| BBox::new(x0, y0, x1, y1).unwrap();

    let out = refine(&[Reference { bbox: b(10.0, 10.0, 50.0, 50.0), category: 2 }], &[], &p).map_err(|e| e.to_string())?;
    ensure!(
        out.len() == 1 && close(&out[0], [10.0, 10.0, 50.0, 50.0], 2, 1.0, Origin::Leftover),
        "leftover-only example gave {out:?}"
    );

    let preds = [
        ScoredBox::single(b(0.0, 0.0, 48.0, 40.0), 1, 0.8).unwrap(),
        ScoredBox::single(b(52.0, 0.0, 100.0, 40.0), 1, 0.7).unwrap(),
    ];
    let out = refine(&[Reference { bbox: b(0.0, 0.0, 100.0, 40.0), category: 1 }], &preds, &p).map_err(|e| e.to_string())?;
    ensure!(
        out.len() == 2
            && close(&out[0], [0.0, 0.0, 48.0, 40.0], 1, 0.9, Origin::Split)
            && close(&out[1], [52.0, 0.0, 100.0, 40.0], 1, 0.8, Origin::Split),
        "split example gave {out:?}"
    );

    let refs = [
        Reference { bbox: b(0.0, 0.0, 30.0, 40.0), category: 4 },
        Reference { bbox: b(35.0, 0.0, 80.0, 40.0), category: 4 },
    ];
    let preds = [ScoredBox::single(b(0.0, 0.0, 80.0, 40.0), 4, 0.3).unwrap()];
    let out = refine(&refs, &preds, &p).map_err(|e| e.to_string())?;
    ensure!(
        out.len() == 1 && close(&out[0], [0.0, 0.0, 80.0, 40.0], 4, 0.7, Origin::Merge),
        "merge example gave {out:?}"
    );
    Ok("leftover, two-way split (0.9/0.8) and merge (0.7) reproduced".into())
}
