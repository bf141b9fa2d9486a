use std::fmt;

use super::ap::{average_precision, class_mean, match_detections};
use crate::geometry::{iou, LabeledBox, ScoredBox};

pub const DEFAULT_FOREGROUND_IOU: f64 = 0.5;
pub const DEFAULT_BACKGROUND_IOU: f64 = 0.1;

/// Error type of a false-positive detection. `gt` is the index (within the
/// detection's image) of the ground truth the oracle fix uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionError {
    Cls { gt: usize },
    Loc { gt: usize },
    Both,
    Dupe,
    Bkg,
}

impl DetectionError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            DetectionError::Cls { .. } => ErrorKind::Cls,
            DetectionError::Loc { .. } => ErrorKind::Loc,
            DetectionError::Both => ErrorKind::Both,
            DetectionError::Dupe => ErrorKind::Dupe,
            DetectionError::Bkg => ErrorKind::Bkg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorKind {
    Cls,
    Loc,
    Both,
    Dupe,
    Bkg,
    Miss,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 6] =
        [ErrorKind::Cls, ErrorKind::Loc, ErrorKind::Both, ErrorKind::Dupe, ErrorKind::Bkg, ErrorKind::Miss];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Cls => "Cls",
            ErrorKind::Loc => "Loc",
            ErrorKind::Both => "Both",
            ErrorKind::Dupe => "Dupe",
            ErrorKind::Bkg => "Bkg",
            ErrorKind::Miss => "Miss",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TideReport {
    pub foreground_iou: f64,
    pub background_iou: f64,
    /// Class-mean AP at the foreground threshold before any fix.
    pub base_ap: f64,
    /// `errors[img][d]`: `None` for true positives.
    pub errors: Vec<Vec<Option<DetectionError>>>,
    /// Ground truths counted as missed, per image.
    pub missed: Vec<Vec<usize>>,
    /// AP gain of each oracle fix, indexed like [`ErrorKind::ALL`].
    pub delta: [f64; 6],
    /// Number of detections or ground truths in each category.
    pub counts: [usize; 6],
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl TideReport {
    pub fn delta(&self, kind: ErrorKind) -> f64 {
        self.delta[kind.index()]
    }

    pub fn count(&self, kind: ErrorKind) -> usize {
        self.counts[kind.index()]
    }
}

fn ap_at(dets: &[Vec<ScoredBox>], gts: &[Vec<LabeledBox>], t: f64) -> Option<f64> {
    class_mean(&average_precision(dets, gts, t))
}

/// Classify a false positive. Checked in order: background, duplicate,
/// wrong class, poor localization, both.
fn classify(det: &ScoredBox, gts: &[LabeledBox], t_f: f64, t_b: f64) -> DetectionError {
    let mut best_any = 0.0f64;
    let mut best_same: Option<(usize, f64)> = None;
    let mut best_other: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        let o = iou(&det.bbox, &gt.bbox);
        best_any = best_any.max(o);
        let slot = if gt.category == det.category { &mut best_same } else { &mut best_other };
        if slot.is_none_or(|(_, b)| o > b) {
            *slot = Some((g, o));
        }
    }
    if best_any < t_b {
        return DetectionError::Bkg;
    }
    // A same-class GT at IOU >= t_f would have been matched had it been free.
    if best_same.is_some_and(|(_, o)| o >= t_f) {
        return DetectionError::Dupe;
    }
    if let Some((g, o)) = best_other {
        if o >= t_f {
            return DetectionError::Cls { gt: g };
        }
    }
    if let Some((g, o)) = best_same {
        if o >= t_b {
            return DetectionError::Loc { gt: g };
        }
    }
    DetectionError::Both
}

/// TIDE-style error decomposition. Each error type's delta is the AP at
/// `t_f` after applying its oracle fix to every error of that type, minus
/// the unfixed AP. A fix that leaves no ground truth scores a delta of 0.
pub fn tide_breakdown(dets: &[Vec<ScoredBox>], gts: &[Vec<LabeledBox>], t_f: f64, t_b: f64) -> TideReport {
    assert!(0.0 < t_b && t_b < t_f && t_f < 1.0, "need 0 < t_b < t_f < 1");
    let matching = match_detections(dets, gts, t_f);
    let errors: Vec<Vec<Option<DetectionError>>> = dets
        .iter()
        .enumerate()
        .map(|(img, ds)| {
            ds.iter()
                .enumerate()
                .map(|(d, det)| matching.detections[img][d].is_none().then(|| classify(det, &gts[img], t_f, t_b)))
                .collect()
        })
        .collect();

    let missed: Vec<Vec<usize>> = gts
        .iter()
        .enumerate()
        .map(|(img, g)| {
            (0..g.len())
                .filter(|&i| matching.ground_truth[img][i].is_none())
                .filter(|&i| {
                    !errors[img].iter().flatten().any(|e| {
                        matches!(e, DetectionError::Cls { gt } | DetectionError::Loc { gt } if *gt == i)
                    })
                })
                .collect()
        })
        .collect();

    let mut counts = [0usize; 6];
    for e in errors.iter().flatten().flatten() {
        counts[e.kind().index()] += 1;
    }
    counts[ErrorKind::Miss.index()] = missed.iter().map(Vec::len).sum();

    let base = ap_at(dets, gts, t_f).unwrap_or(0.0);
    let mut delta = [0.0; 6];
    for kind in ErrorKind::ALL {
        let fixed = match kind {
            ErrorKind::Miss => {
                let gts_fixed: Vec<Vec<LabeledBox>> = gts
                    .iter()
                    .zip(&missed)
                    .map(|(g, m)| {
                        g.iter().enumerate().filter(|(i, _)| !m.contains(i)).map(|(_, b)| *b).collect()
                    })
                    .collect();
                ap_at(dets, &gts_fixed, t_f)
            }
            _ => {
                let dets_fixed: Vec<Vec<ScoredBox>> = dets
                    .iter()
                    .enumerate()
                    .map(|(img, ds)| {
                        ds.iter()
                            .zip(&errors[img])
                            .filter_map(|(det, err)| match err {
                                Some(e) if e.kind() == kind => match *e {
                                    DetectionError::Cls { gt } => {
                                        let mut d = det.clone();
                                        d.category = gts[img][gt].category;
                                        Some(d)
                                    }
                                    DetectionError::Loc { gt } => {
                                        let mut d = det.clone();
                                        d.bbox = gts[img][gt].bbox;
                                        Some(d)
                                    }
                                    _ => None,
                                },
                                _ => Some(det.clone()),
                            })
                            .collect()
                    })
                    .collect();
                ap_at(&dets_fixed, gts, t_f)
            }
        };
        delta[kind.index()] = fixed.map_or(0.0, |ap| ap - base);
    }

    TideReport {
        foreground_iou: t_f,
        background_iou: t_b,
        base_ap: base,
        errors,
        missed,
        delta,
        counts,
        true_positives: matching.true_positives(),
        false_positives: matching.false_positives(),
        false_negatives: matching.false_negatives(),
    }
}
