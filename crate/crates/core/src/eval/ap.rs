use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{iou, Category, LabeledBox, ScoredBox};

/// Recall grid size for interpolated precision.
pub const RECALL_POINTS: usize = 101;

/// The ten IOU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Outcome of greedy matching at one IOU threshold. Indices are per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `detections[img][d]` is the GT index the detection matched, if any.
    pub detections: Vec<Vec<Option<usize>>>,
    /// `ground_truth[img][g]` is the detection index that matched the GT.
    pub ground_truth: Vec<Vec<Option<usize>>>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().flatten().filter(|m| m.is_some()).count()
    }
    pub fn false_positives(&self) -> usize {
        self.detections.iter().flatten().filter(|m| m.is_none()).count()
    }
    pub fn false_negatives(&self) -> usize {
        self.ground_truth.iter().flatten().filter(|m| m.is_none()).count()
    }
}

/// Detections of every image in the order they are matched: score
/// descending, then image index, then input index.
pub(crate) fn match_order(dets: &[Vec<ScoredBox>]) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(img, ds)| (0..ds.len()).map(move |d| (img, d)))
        .collect();
    order.sort_by(|&(ia, da), &(ib, db)| {
        dets[ib][db]
            .score
            .total_cmp(&dets[ia][da].score)
            .then(ia.cmp(&ib))
            .then(da.cmp(&db))
    });
    order
}

/// Greedy per-class matching: each detection, in score order, takes the
/// unmatched same-class GT of its image with the highest IOU (lowest index on
/// ties) when that IOU reaches `threshold`.
pub fn match_detections(dets: &[Vec<ScoredBox>], gts: &[Vec<LabeledBox>], threshold: f64) -> Matching {
    assert_eq!(dets.len(), gts.len(), "detections and ground truth must cover the same images");
    let mut det_match: Vec<Vec<Option<usize>>> = dets.iter().map(|d| vec![None; d.len()]).collect();
    let mut gt_match: Vec<Vec<Option<usize>>> = gts.iter().map(|g| vec![None; g.len()]).collect();
    for (img, d) in match_order(dets) {
        let det = &dets[img][d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[img].iter().enumerate() {
            if gt.category != det.category || gt_match[img][g].is_some() {
                continue;
            }
            let o = iou(&det.bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, o)) = best {
            if o >= threshold {
                det_match[img][d] = Some(g);
                gt_match[img][g] = Some(d);
            }
        }
    }
    Matching { detections: det_match, ground_truth: gt_match }
}

/// Interpolated average precision from a ranked TP/FP sequence: precision is
/// made non-increasing in recall, then sampled at recall 0, 0.01, ..., 1.
pub fn interpolated_ap(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in hits {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&v| v < level);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / RECALL_POINTS as f64
}

/// Per-class AP at one IOU threshold. Classes without any GT instance are
/// absent from the result.
pub fn average_precision(
    dets: &[Vec<ScoredBox>],
    gts: &[Vec<LabeledBox>],
    threshold: f64,
) -> BTreeMap<Category, f64> {
    let matching = match_detections(dets, gts, threshold);
    let mut num_gt: BTreeMap<Category, usize> = BTreeMap::new();
    for g in gts.iter().flatten() {
        *num_gt.entry(g.category).or_default() += 1;
    }
    let mut hits: BTreeMap<Category, Vec<bool>> = num_gt.keys().map(|&c| (c, Vec::new())).collect();
    for (img, d) in match_order(dets) {
        if let Some(h) = hits.get_mut(&dets[img][d].category) {
            h.push(matching.detections[img][d].is_some());
        }
    }
    hits.into_iter().map(|(c, h)| (c, interpolated_ap(&h, num_gt[&c]))).collect()
}

/// Class-mean AP; `None` when no class has ground truth.
pub fn class_mean(per_class: &BTreeMap<Category, f64>) -> Option<f64> {
    (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAp {
    /// Mean over thresholds of the class-mean AP; 0 when undefined.
    pub value: f64,
    /// False when no ground truth exists at all.
    pub defined: bool,
    pub thresholds: Vec<f64>,
    /// Class-mean AP at each threshold.
    pub per_threshold: Vec<f64>,
    /// AP per class, one entry per threshold.
    pub per_class: BTreeMap<Category, Vec<f64>>,
}

pub fn mean_ap(dets: &[Vec<ScoredBox>], gts: &[Vec<LabeledBox>]) -> MeanAp {
    let thresholds = coco_thresholds().to_vec();
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    let mut per_class: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    let mut defined = true;
    for &t in &thresholds {
        let ap = average_precision(dets, gts, t);
        match class_mean(&ap) {
            Some(m) => per_threshold.push(m),
            None => {
                defined = false;
                per_threshold.push(0.0);
            }
        }
        for (c, v) in ap {
            per_class.entry(c).or_default().push(v);
        }
    }
    let value = if defined { per_threshold.iter().sum::<f64>() / thresholds.len() as f64 } else { 0.0 };
    MeanAp { value, defined, thresholds, per_threshold, per_class }
}

/// Categories that appear in the ground truth.
pub fn gt_categories(gts: &[Vec<LabeledBox>]) -> BTreeSet<Category> {
    gts.iter().flatten().map(|g| g.category).collect()
}
