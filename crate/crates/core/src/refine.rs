//! Box refinement from ground-truth semantic masks.
//!
//! Reference boxes are the circumscribed rectangles of mask components. They
//! are re-localized against predicted boxes in four ordered phases:
//!
//! * **split**: a confident prediction that touches a reference on two or
//!   more sides carves an instance out of a multi-instance reference;
//! * **merge**: unconsumed fragments of one category are unioned when a
//!   prediction covers the union;
//! * **add**: well-matched confident predictions re-emit (or crop) the
//!   reference;
//! * **leftover**: references consumed by neither split nor merge are
//!   emitted unchanged.
//!
//! Split, merge and add candidates go through per-class NMS before the
//! leftovers are appended.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{crop, iou, nms, touch, BBox, Category, Detection, LabeledBox, ScoredBox};
use crate::mask::{connected_components, SemanticMask};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("invalid refinement parameter {name} = {value}: {reason}")]
    InvalidParam { name: &'static str, value: f64, reason: &'static str },
}

/// Thresholds and bonuses for the refinement phases.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementParams {
    /// Minimum class confidence for a prediction to split a reference.
    pub split_conf: f64,
    /// At or below this IOU a splitting prediction must touch and crop.
    pub split_iou: f64,
    pub split_bonus: f64,
    /// Minimum class confidence of the best-overlap prediction for a merge.
    pub merge_conf: f64,
    pub merge_bonus: f64,
    /// Upper bound on split/merge confidences.
    pub conf_cap: f64,
    pub add_conf: f64,
    pub add_iou: f64,
    pub nms_iou: f64,
    /// Side-matching tolerance as a fraction of the reference extent.
    pub touch_tol: f64,
    /// Above this many fragments per class, merging is greedy instead of
    /// exhaustive over subsets.
    pub max_powerset_members: usize,
}

impl Default for RefinementParams {
    fn default() -> Self {
        Self {
            split_conf: 0.4,
            split_iou: 0.6,
            split_bonus: 0.1,
            merge_conf: 0.1,
            merge_bonus: 0.4,
            conf_cap: 0.9,
            add_conf: 0.5,
            add_iou: 0.8,
            nms_iou: 0.4,
            touch_tol: 0.1,
            max_powerset_members: 16,
        }
    }
}

impl RefinementParams {
    pub fn validate(&self) -> Result<(), RefineError> {
        let ratios = [
            ("split_conf", self.split_conf),
            ("split_iou", self.split_iou),
            ("split_bonus", self.split_bonus),
            ("merge_conf", self.merge_conf),
            ("merge_bonus", self.merge_bonus),
            ("conf_cap", self.conf_cap),
            ("add_conf", self.add_conf),
            ("add_iou", self.add_iou),
            ("nms_iou", self.nms_iou),
            ("touch_tol", self.touch_tol),
        ];
        for (name, value) in ratios {
            if !(0.0..=1.0).contains(&value) {
                return Err(RefineError::InvalidParam { name, value, reason: "must lie in [0, 1]" });
            }
        }
        if self.max_powerset_members < 2 {
            return Err(RefineError::InvalidParam {
                name: "max_powerset_members",
                value: self.max_powerset_members as f64,
                reason: "must be at least 2",
            });
        }
        // Subset masks are u64.
        if self.max_powerset_members > 24 {
            return Err(RefineError::InvalidParam {
                name: "max_powerset_members",
                value: self.max_powerset_members as f64,
                reason: "must be at most 24",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Split,
    Merge,
    Add,
    Leftover,
}

impl Origin {
    pub const ALL: [Origin; 4] = [Origin::Split, Origin::Merge, Origin::Add, Origin::Leftover];

    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Split => "split",
            Origin::Merge => "merge",
            Origin::Add => "add",
            Origin::Leftover => "leftover",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split" => Ok(Origin::Split),
            "merge" => Ok(Origin::Merge),
            "add" => Ok(Origin::Add),
            "leftover" => Ok(Origin::Leftover),
            other => Err(format!("unknown origin {other:?}")),
        }
    }
}

/// A detection training target produced by refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedBox {
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
    pub origin: Origin,
    /// Refined boxes are meant for localization-only supervision; this stays
    /// `false` unless a caller opts in.
    pub train_classification: bool,
}

impl Detection for RefinedBox {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }
    fn category(&self) -> Category {
        self.category
    }
    fn rank_score(&self) -> f64 {
        self.confidence
    }
    fn tie_break(&self, other: &Self) -> Ordering {
        self.bbox
            .total_cmp(&other.bbox)
            .then(self.origin.cmp(&other.origin))
            .then(self.confidence.total_cmp(&other.confidence))
    }
}

/// A mask-derived box with its category.
pub type Reference = LabeledBox;

/// What happened to each input reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceFate {
    Split,
    /// Member of the accepted merge group with this index.
    Merged(usize),
    Leftover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub boxes: Vec<RefinedBox>,
    /// Parallel to the input references.
    pub fates: Vec<ReferenceFate>,
}

pub fn extract_reference_boxes(mask: &SemanticMask) -> Vec<Reference> {
    connected_components(mask)
        .into_iter()
        .map(|c| Reference { bbox: c.bounds, category: c.category })
        .collect()
}

pub fn refine(
    references: &[Reference],
    predictions: &[ScoredBox],
    params: &RefinementParams,
) -> Result<Vec<RefinedBox>, RefineError> {
    refine_traced(references, predictions, params).map(|r| r.boxes)
}

pub fn refine_from_mask(
    mask: &SemanticMask,
    predictions: &[ScoredBox],
    params: &RefinementParams,
) -> Result<Vec<RefinedBox>, RefineError> {
    refine(&extract_reference_boxes(mask), predictions, params)
}

/// [`refine`] plus the per-reference accounting.
pub fn refine_traced(
    references: &[Reference],
    predictions: &[ScoredBox],
    params: &RefinementParams,
) -> Result<Refinement, RefineError> {
    params.validate()?;

    let mut preds: Vec<&ScoredBox> = predictions.iter().collect();
    preds.sort_by(|a, b| a.total_cmp(b));

    let mut fates = vec![ReferenceFate::Leftover; references.len()];
    let mut shortlist: Vec<RefinedBox> = Vec::new();

    split_phase(references, &preds, params, &mut fates, &mut shortlist);
    merge_phase(references, &preds, params, &mut fates, &mut shortlist);
    add_phase(references, &preds, params, &mut shortlist);

    let mut boxes = nms(&shortlist, params.nms_iou);
    boxes.extend(
        references
            .iter()
            .zip(&fates)
            .filter(|(_, f)| **f == ReferenceFate::Leftover)
            .map(|(r, _)| RefinedBox {
                bbox: r.bbox,
                category: r.category,
                confidence: 1.0,
                origin: Origin::Leftover,
                train_classification: false,
            }),
    );
    Ok(Refinement { boxes, fates })
}

fn shortlisted(bbox: BBox, category: Category, confidence: f64, origin: Origin) -> RefinedBox {
    RefinedBox { bbox, category, confidence, origin, train_classification: false }
}

fn split_phase(
    references: &[Reference],
    preds: &[&ScoredBox],
    params: &RefinementParams,
    fates: &mut [ReferenceFate],
    shortlist: &mut Vec<RefinedBox>,
) {
    for (r, reference) in references.iter().enumerate() {
        let j = reference.category;
        for pred in preds.iter().filter(|p| p.score_for(j) > params.split_conf) {
            // Each prediction crops the original reference, never a previous crop.
            let candidate = if iou(&reference.bbox, &pred.bbox) <= params.split_iou {
                match crop(&reference.bbox, &pred.bbox, params.touch_tol) {
                    Ok(c) => c,
                    Err(_) => continue,
                }
            } else {
                reference.bbox
            };
            let conf = params.conf_cap.min(pred.score_for(j) + params.split_bonus);
            shortlist.push(shortlisted(candidate, j, conf, Origin::Split));
            fates[r] = ReferenceFate::Split;
        }
    }
}

/// Highest-IOU prediction with positive overlap; ties go to the earliest in
/// the sorted prediction list.
fn best_overlap<'a>(bbox: &BBox, preds: &[&'a ScoredBox]) -> Option<(&'a ScoredBox, f64)> {
    let mut best: Option<(&ScoredBox, f64)> = None;
    for pred in preds {
        let ov = iou(bbox, &pred.bbox);
        if ov > 0.0 && best.is_none_or(|(_, b)| ov > b) {
            best = Some((pred, ov));
        }
    }
    best
}

struct MergeCandidate {
    bbox: BBox,
    members: Vec<usize>,
    overlap: f64,
    score: f64,
    mask: u64,
}

fn merge_phase(
    references: &[Reference],
    preds: &[&ScoredBox],
    params: &RefinementParams,
    fates: &mut [ReferenceFate],
    shortlist: &mut Vec<RefinedBox>,
) {
    let mut categories: Vec<Category> = references
        .iter()
        .zip(fates.iter())
        .filter(|(_, f)| **f == ReferenceFate::Leftover)
        .map(|(r, _)| r.category)
        .collect();
    categories.sort_unstable();
    categories.dedup();

    let mut group = 0usize;
    for j in categories {
        let members: Vec<usize> = (0..references.len())
            .filter(|&r| references[r].category == j && fates[r] == ReferenceFate::Leftover)
            .collect();
        if members.len() < 2 {
            continue;
        }
        let accepted = if members.len() <= params.max_powerset_members {
            powerset_merges(references, &members, preds, params)
        } else {
            greedy_merges(references, &members, preds, params)
        };
        for (bbox, group_members, score) in accepted {
            let conf = params.conf_cap.min(score + params.merge_bonus);
            shortlist.push(shortlisted(bbox, j, conf, Origin::Merge));
            for m in group_members {
                fates[m] = ReferenceFate::Merged(group);
            }
            group += 1;
        }
    }
}

/// Exhaustive subset merging. Identical merged rectangles are deduplicated
/// in favour of the largest subset; candidates are then accepted in order
/// of decreasing overlap with their best prediction, skipping any whose
/// members were already merged.
fn powerset_merges(
    references: &[Reference],
    members: &[usize],
    preds: &[&ScoredBox],
    params: &RefinementParams,
) -> Vec<(BBox, Vec<usize>, f64)> {
    let j = references[members[0]].category;
    let n = members.len();
    let mut by_box: HashMap<[u64; 4], (BBox, u64)> = HashMap::new();
    let mut order: Vec<[u64; 4]> = Vec::new();

    for mask in 1u64..(1u64 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut merged: Option<BBox> = None;
        for (bit, &m) in members.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                let b = references[m].bbox;
                merged = Some(merged.map_or(b, |acc| acc.union_rect(&b)));
            }
        }
        let merged = merged.expect("subset has at least two members");
        let key = merged.coords().map(f64::to_bits);
        match by_box.get_mut(&key) {
            Some(entry) => {
                if mask.count_ones() > entry.1.count_ones() {
                    entry.1 = mask;
                }
            }
            None => {
                by_box.insert(key, (merged, mask));
                order.push(key);
            }
        }
    }

    let mut candidates: Vec<MergeCandidate> = order
        .iter()
        .filter_map(|key| {
            let (bbox, mask) = by_box[key];
            let (pred, overlap) = best_overlap(&bbox, preds)?;
            let members = members
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) != 0)
                .map(|(_, &m)| m)
                .collect();
            Some(MergeCandidate { bbox, members, overlap, score: pred.score_for(j), mask })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.overlap
            .total_cmp(&a.overlap)
            .then(b.members.len().cmp(&a.members.len()))
            .then(a.mask.cmp(&b.mask))
    });

    let mut used = vec![false; references.len()];
    let mut accepted = Vec::new();
    for cand in candidates {
        if cand.score <= params.merge_conf || cand.members.iter().any(|&m| used[m]) {
            continue;
        }
        for &m in &cand.members {
            used[m] = true;
        }
        accepted.push((cand.bbox, cand.members, cand.score));
    }
    accepted
}

/// Agglomerative fallback: repeatedly merge the pair of clusters whose union
/// best overlaps a prediction clearing `merge_conf`.
fn greedy_merges(
    references: &[Reference],
    members: &[usize],
    preds: &[&ScoredBox],
    params: &RefinementParams,
) -> Vec<(BBox, Vec<usize>, f64)> {
    let j = references[members[0]].category;
    let mut clusters: Vec<(BBox, Vec<usize>, f64)> =
        members.iter().map(|&m| (references[m].bbox, vec![m], 0.0)).collect();

    loop {
        let mut best: Option<(usize, usize, BBox, f64, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let merged = clusters[a].0.union_rect(&clusters[b].0);
                let Some((pred, overlap)) = best_overlap(&merged, preds) else {
                    continue;
                };
                let score = pred.score_for(j);
                if score > params.merge_conf && best.is_none_or(|(.., o, _)| overlap > o) {
                    best = Some((a, b, merged, overlap, score));
                }
            }
        }
        let Some((a, b, merged, _, score)) = best else {
            break;
        };
        let (_, absorbed, _) = clusters.remove(b);
        clusters[a].0 = merged;
        clusters[a].1.extend(absorbed);
        clusters[a].1.sort_unstable();
        clusters[a].2 = score;
    }

    clusters.into_iter().filter(|c| c.1.len() > 1).collect()
}

fn add_phase(
    references: &[Reference],
    preds: &[&ScoredBox],
    params: &RefinementParams,
    shortlist: &mut Vec<RefinedBox>,
) {
    for reference in references {
        let j = reference.category;
        for pred in preds.iter().filter(|p| p.score_for(j) > params.add_conf) {
            let s = pred.score_for(j);
            if iou(&reference.bbox, &pred.bbox) >= params.add_iou {
                shortlist.push(shortlisted(reference.bbox, j, s, Origin::Add));
            } else if touch(&reference.bbox, &pred.bbox, params.touch_tol) {
                if let Ok(c) = crop(&reference.bbox, &pred.bbox, params.touch_tol) {
                    shortlist.push(shortlisted(c, j, s, Origin::Add));
                }
            }
        }
    }
}
