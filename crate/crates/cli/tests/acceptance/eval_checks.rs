use std::collections::BTreeMap;

use crosstask::eval::{average_precision, coco_thresholds, mean_ap, mean_iou, tide_breakdown, DetectionError};
use crosstask::geometry::{BBox, LabeledBox, ScoredBox};
use crosstask::mask::SemanticMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::refine_oracle::{iou, Rect};
use crate::Outcome;

const FIXTURES: usize = 600;
const T_F: f64 = 0.5;
const T_B: f64 = 0.1;

struct Fixture {
    dets: Vec<Vec<ScoredBox>>,
    gts: Vec<Vec<LabeledBox>>,
}

fn rect(b: &BBox) -> Rect {
    Rect { x0: b.x_min(), y0: b.y_min(), x1: b.x_max(), y1: b.y_max() }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x0 = rng.random_range(0..16) as f64;
    let y0 = rng.random_range(0..16) as f64;
    BBox::new(x0, y0, x0 + rng.random_range(1..8) as f64, y0 + rng.random_range(1..8) as f64).unwrap()
}

fn near(rng: &mut ChaCha8Rng, b: &BBox) -> BBox {
    let d = |rng: &mut ChaCha8Rng| rng.random_range(-2..=2) as f64;
    let x0 = b.x_min() + d(rng);
    let y0 = b.y_min() + d(rng);
    BBox::new(x0, y0, (b.x_max() + d(rng)).max(x0 + 1.0), (b.y_max() + d(rng)).max(y0 + 1.0)).unwrap()
}

fn fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let images = rng.random_range(1..=3);
    let classes = rng.random_range(1..=3u8);
    let mut gts = Vec::new();
    for _ in 0..images {
        let n = rng.random_range(0..=5);
        gts.push(
            (0..n).map(|_| LabeledBox::new(random_box(rng), rng.random_range(1..=classes)).unwrap()).collect::<Vec<_>>(),
        );
    }
    let total = rng.random_range(0..=20);
    let mut dets: Vec<Vec<ScoredBox>> = vec![Vec::new(); images];
    for _ in 0..total {
        let img = rng.random_range(0..images);
        let (bbox, cat) = match gts[img].len() {
            n if n > 0 && rng.random_bool(0.7) => {
                let g = gts[img][rng.random_range(0..n)];
                let c = if rng.random_bool(0.8) { g.category } else { rng.random_range(1..=classes) };
                (if rng.random_bool(0.4) { g.bbox } else { near(rng, &g.bbox) }, c)
            }
            _ => (random_box(rng), rng.random_range(1..=classes)),
        };
        // Few distinct levels so equal scores occur.
        let score = rng.random_range(1..=8) as f64 / 8.0;
        dets[img].push(ScoredBox::single(bbox, cat, score).unwrap());
    }
    Fixture { dets, gts }
}

/// Greedy matching in (score desc, image, index) order. Returns
/// `matched[img][d]` as the matched GT index.
fn oracle_match(f: &Fixture, t: f64) -> Vec<Vec<Option<usize>>> {
    let mut order: Vec<(usize, usize)> =
        f.dets.iter().enumerate().flat_map(|(i, ds)| (0..ds.len()).map(move |d| (i, d))).collect();
    order.sort_by(|a, b| f.dets[b.0][b.1].score.partial_cmp(&f.dets[a.0][a.1].score).unwrap().then(a.cmp(b)));
    let mut taken: Vec<Vec<bool>> = f.gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut matched: Vec<Vec<Option<usize>>> = f.dets.iter().map(|d| vec![None; d.len()]).collect();
    for (i, d) in order {
        let det = &f.dets[i][d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in f.gts[i].iter().enumerate() {
            if gt.category != det.category || taken[i][g] {
                continue;
            }
            let o = iou(&rect(&det.bbox), &rect(&gt.bbox));
            if best.is_none() || o > best.unwrap().1 {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o >= t {
                taken[i][g] = true;
                matched[i][d] = Some(g);
            }
        }
    }
    matched
}

/// AP per class from an explicit cumulative TP/FP table: interpolated
/// precision at recall r is the best precision at any rank reaching r.
fn brute_ap(f: &Fixture, t: f64) -> BTreeMap<u8, f64> {
    let matched = oracle_match(f, t);
    let mut num_gt: BTreeMap<u8, usize> = BTreeMap::new();
    for g in f.gts.iter().flatten() {
        *num_gt.entry(g.category).or_default() += 1;
    }
    let mut order: Vec<(usize, usize)> =
        f.dets.iter().enumerate().flat_map(|(i, ds)| (0..ds.len()).map(move |d| (i, d))).collect();
    order.sort_by(|a, b| f.dets[b.0][b.1].score.partial_cmp(&f.dets[a.0][a.1].score).unwrap().then(a.cmp(b)));
    let mut out = BTreeMap::new();
    for (&c, &n) in &num_gt {
        let mut table: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
        let (mut tp, mut fp) = (0usize, 0usize);
        for &(i, d) in &order {
            if f.dets[i][d].category != c {
                continue;
            }
            if matched[i][d].is_some() {
                tp += 1;
            } else {
                fp += 1;
            }
            table.push((tp as f64 / n as f64, tp as f64 / (tp + fp) as f64));
        }
        let mut sum = 0.0;
        for r in 0..=100 {
            let level = r as f64 / 100.0;
            let best = table.iter().filter(|(rec, _)| *rec >= level).map(|(_, p)| *p).fold(0.0, f64::max);
            sum += best;
        }
        out.insert(c, sum / 101.0);
    }
    out
}

fn ap_checks() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa9_0001);
    let mut compared = 0;
    for k in 0..FIXTURES {
        let f = fixture(&mut rng);
        for t in coco_thresholds() {
            let got = average_precision(&f.dets, &f.gts, t);
            let want = brute_ap(&f, t);
            ensure!(got.keys().eq(want.keys()), "fixture {k}, t={t}: class sets differ");
            for (c, w) in &want {
                ensure!((got[c] - w).abs() <= 1e-9, "fixture {k}, t={t}, class {c}: AP {} vs oracle {w}", got[c]);
                compared += 1;
            }
        }
    }

    let b = |x0, y0, x1, y1| BBox::new(x0, y0, x1, y1).unwrap();
    let gt = vec![vec![LabeledBox::new(b(0.0, 0.0, 10.0, 10.0), 1).unwrap()]];
    let det = vec![vec![ScoredBox::single(b(0.0, 0.0, 10.0, 9.0), 1, 0.8).unwrap()]];
    let m = mean_ap(&det, &gt);
    ensure!((m.value - 0.9).abs() <= 1e-9, "IOU-0.9 fixture mAP {}", m.value);

    let gt_strip = SemanticMask::new(4, 1, vec![1, 1, 0, 0]).unwrap();
    let pred_strip = SemanticMask::new(4, 1, vec![0, 1, 1, 0]).unwrap();
    let mi = mean_iou(&[pred_strip], &[gt_strip]).map_err(|e| e.to_string())?;
    ensure!((mi.per_class[&1] - 1.0 / 3.0).abs() <= 1e-12, "strip class-1 IOU {}", mi.per_class[&1]);
    ensure!((mi.value - 1.0 / 3.0).abs() <= 1e-12, "strip mIOU {}", mi.value);
    Ok(format!("{compared} class APs over {FIXTURES} fixtures match the brute-force oracle; mAP 0.9 and mIOU 1/3 fixtures exact"))
}

pub fn ap_and_miou() -> Outcome {
    ap_checks()
}

fn oracle_category(det: &ScoredBox, gts: &[LabeledBox]) -> DetectionError {
    let d = rect(&det.bbox);
    let ious: Vec<f64> = gts.iter().map(|g| iou(&d, &rect(&g.bbox))).collect();
    let max_all = ious.iter().copied().fold(0.0, f64::max);
    let argmax = |same: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if (gt.category == det.category) == same && best.is_none_or(|(_, b)| ious[g] > b) {
                best = Some((g, ious[g]));
            }
        }
        best
    };
    if max_all < T_B {
        return DetectionError::Bkg;
    }
    let same = argmax(true);
    let other = argmax(false);
    if same.is_some_and(|(_, o)| o >= T_F) {
        return DetectionError::Dupe;
    }
    if let Some((g, _)) = other.filter(|(_, o)| *o >= T_F) {
        return DetectionError::Cls { gt: g };
    }
    if let Some((g, _)) = same.filter(|(_, o)| *o >= T_B) {
        return DetectionError::Loc { gt: g };
    }
    DetectionError::Both
}

pub fn tide() -> Outcome {
    use crosstask::eval::ErrorKind;
    let mut rng = ChaCha8Rng::seed_from_u64(0x71de);
    let mut fps = 0;
    for k in 0..FIXTURES {
        let f = fixture(&mut rng);
        let r = tide_breakdown(&f.dets, &f.gts, T_F, T_B);
        let matched = oracle_match(&f, T_F);
        let total: usize = f.dets.iter().map(Vec::len).sum();
        let categorized: usize =
            [ErrorKind::Cls, ErrorKind::Loc, ErrorKind::Both, ErrorKind::Dupe, ErrorKind::Bkg].iter().map(|&e| r.count(e)).sum();
        ensure!(categorized == r.false_positives, "fixture {k}: {categorized} categories for {} FPs", r.false_positives);
        ensure!(categorized + r.true_positives == total, "fixture {k}: categories + TP != detections");
        for (i, ds) in f.dets.iter().enumerate() {
            for (d, det) in ds.iter().enumerate() {
                match (matched[i][d], r.errors[i][d]) {
                    (Some(_), None) => {}
                    (None, Some(e)) => {
                        let want = oracle_category(det, &f.gts[i]);
                        ensure!(e == want, "fixture {k}, image {i}, det {d}: {e:?} vs oracle {want:?}");
                        fps += 1;
                    }
                    (m, e) => return Err(format!("fixture {k}, image {i}, det {d}: match {m:?} but error {e:?}")),
                }
            }
        }
        for kind in [ErrorKind::Bkg, ErrorKind::Dupe, ErrorKind::Both] {
            ensure!(r.delta(kind) >= 0.0, "fixture {k}: {kind} delta {} < 0", r.delta(kind));
        }
    }

    let b = |x0, y0, x1, y1| BBox::new(x0, y0, x1, y1).unwrap();
    let gts = vec![vec![LabeledBox::new(b(0.0, 0.0, 10.0, 10.0), 1).unwrap()]];
    let dets = vec![vec![ScoredBox::single(b(6.0, 0.0, 16.0, 10.0), 1, 0.9).unwrap()]];
    let r = tide_breakdown(&dets, &gts, T_F, T_B);
    ensure!(r.delta(ErrorKind::Loc) > 0.0, "Loc fixture: Loc delta {}", r.delta(ErrorKind::Loc));
    for kind in [ErrorKind::Cls, ErrorKind::Both, ErrorKind::Dupe, ErrorKind::Bkg, ErrorKind::Miss] {
        ensure!(r.delta(kind) == 0.0, "Loc fixture: {kind} delta {}", r.delta(kind));
    }
    Ok(format!("{FIXTURES} fixtures, {fps} false positives each in exactly one category; Loc fixture delta {:.3}", r.delta(ErrorKind::Loc)))
}
