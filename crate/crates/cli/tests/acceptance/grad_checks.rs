//! Finite-difference harness, independent of the tool's own `--check-grads`.

use crosstask::losses::{attention_mse, ce_loss, modulate, modulate_backward, triplet_object_loss, Field, KeyStore};
use crosstask::mask::SemanticMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const CASES: usize = 120;
const GAMMA: f64 = 0.1;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = n(a).max(n(b));
    if s == 0.0 {
        0.0
    } else {
        n(&d) / s
    }
}

fn numeric(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut w = x.to_vec();
    (0..x.len())
        .map(|i| {
            w[i] = x[i] + H;
            let up = f(&w);
            w[i] = x[i] - H;
            let down = f(&w);
            w[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect()
}

struct Case {
    w: usize,
    h: usize,
    c: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    mask: SemanticMask,
}

fn case(rng: &mut ChaCha8Rng) -> Case {
    let (w, h, c) = (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(2..=5));
    let n = w * h * c;
    let mut v = || (0..n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
    let (a, b) = (v(), v());
    let labels = (0..w * h)
        .map(|_| if rng.random_bool(0.1) { 255 } else { rng.random_range(0..c as u8) })
        .collect();
    Case { w, h, c, a, b, mask: SemanticMask::new(w, h, labels).unwrap() }
}

impl Case {
    fn field(&self, data: &[f64]) -> Field {
        Field::new(self.w, self.h, self.c, data.to_vec()).unwrap()
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Worst error per operation: (ce, mse, modulate, triplet) and the number of
/// triplet cases checked.
fn run() -> Result<([f64; 4], usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ad_c4ec);
    let mut worst = [0.0f64; 4];
    for _ in 0..CASES {
        let k = case(&mut rng);
        let (_, g) = ce_loss(&k.field(&k.a), &k.mask).map_err(|e| e.to_string())?;
        let num = numeric(&k.a, |x| ce_loss(&k.field(x), &k.mask).unwrap().0);
        worst[0] = worst[0].max(rel_err(g.data(), &num));

        let (_, g) = attention_mse(&k.field(&k.b), &k.mask).map_err(|e| e.to_string())?;
        let num = numeric(&k.b, |x| attention_mse(&k.field(x), &k.mask).unwrap().0);
        worst[1] = worst[1].max(rel_err(g.data(), &num));

        // Through the cross-entropy: L(l, a) = ce(l * a).
        let (l, a) = (k.field(&k.a), k.field(&k.b));
        let (_, up) = ce_loss(&modulate(&l, &a).unwrap(), &k.mask).unwrap();
        let (dl, da) = modulate_backward(&l, &a, &up).map_err(|e| e.to_string())?;
        let num_l = numeric(&k.a, |x| ce_loss(&modulate(&k.field(x), &a).unwrap(), &k.mask).unwrap().0);
        let num_a = numeric(&k.b, |x| ce_loss(&modulate(&l, &k.field(x)).unwrap(), &k.mask).unwrap().0);
        worst[2] = worst[2].max(rel_err(dl.data(), &num_l)).max(rel_err(da.data(), &num_a));
    }

    let mut checked = 0;
    let mut attempts = 0;
    while checked < CASES {
        attempts += 1;
        if attempts > 100 * CASES {
            return Err(format!("only {checked} usable triplet cases"));
        }
        let d = rng.random_range(2..=8);
        let mut store = KeyStore::new(64);
        let classes = rng.random_range(1..=4u8);
        for _ in 0..rng.random_range(1..=10) {
            store.insert(unit(&mut rng, d), rng.random_range(1..=classes)).unwrap();
        }
        let queries: Vec<(Vec<f64>, u8)> =
            (0..rng.random_range(1..=4)).map(|_| (unit(&mut rng, d), rng.random_range(1..=classes))).collect();
        let out = triplet_object_loss(&queries, &store, GAMMA).map_err(|e| e.to_string())?;

        let mut total = 0.0;
        for (i, (q, c)) in queries.iter().enumerate() {
            // Positive: renormalized mean of same-class keys.
            let same: Vec<&[f64]> = store.keys(*c).collect();
            let mut pos = vec![0.0; d];
            for k in &same {
                for (p, v) in pos.iter_mut().zip(k.iter()) {
                    *p += v;
                }
            }
            let pn = pos.iter().map(|x| x * x).sum::<f64>().sqrt();
            // Negative: nearest key of another class.
            let neg = store
                .categories()
                .filter(|k| k != c)
                .flat_map(|k| store.keys(k).map(|v| v.to_vec()).collect::<Vec<_>>())
                .min_by(|a, b| dist(q, a).total_cmp(&dist(q, b)));
            let (Some(neg), true) = (neg, !same.is_empty() && pn > 0.0) else {
                if out.gradients[i].iter().any(|&g| g != 0.0) {
                    return Err(format!("query without a triplet got a gradient {:?}", out.gradients[i]));
                }
                continue;
            };
            let pos: Vec<f64> = pos.iter().map(|x| x / pn).collect();
            let f = |x: &[f64]| (GAMMA + dist(x, &pos) - dist(x, &neg)).max(0.0);
            let slack = GAMMA + dist(q, &pos) - dist(q, &neg);
            total += f(q);
            if slack.abs() < 1e-4 || dist(q, &pos) < 1e-6 || dist(q, &neg) < 1e-6 {
                continue;
            }
            let num = numeric(q, f);
            worst[3] = worst[3].max(rel_err(&out.gradients[i], &num));
            checked += 1;
        }
        if (total - out.loss).abs() > 1e-12 * total.max(1.0) {
            return Err(format!("triplet loss {} vs oracle {total}", out.loss));
        }
    }
    Ok((worst, checked))
}

pub fn all_ops() -> Outcome {
    let (worst, triplets) = run()?;
    let names = ["ce_loss", "attention_mse", "modulate", "triplet_object_loss"];
    for (n, e) in names.iter().zip(worst) {
        ensure!(e < TOL, "{n}: max relative error {e:.3e} >= {TOL:e}");
    }
    Ok(format!(
        "{CASES} cases each ({triplets} triplet queries), max rel. error ce {:.1e}, mse {:.1e}, modulate {:.1e}, triplet {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}
