//! Axis-aligned box algebra: IOU, greedy per-class NMS, and the touch/crop
//! primitives used when re-localizing mask-derived boxes.
//!
//! Coordinates follow the half-open pixel convention: a box covers the
//! integer pixels `p` with `x_min <= p.x < x_max` and `y_min <= p.y < y_max`.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

/// Category index. `0` is background and `255` is the ignore label, so
/// object categories live in `1..=254`.
pub type Category = u8;

pub const BACKGROUND: Category = 0;
pub const IGNORE: Category = 255;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error("degenerate box ({0}, {1}, {2}, {3}): requires x_min < x_max and y_min < y_max")]
    Degenerate(f64, f64, f64, f64),
    #[error("category {0} is not an object category (must be in 1..=254)")]
    BadCategory(u32),
    #[error("score {0} outside [0, 1]")]
    BadScore(f64),
}

/// Axis-aligned rectangle with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(GeometryError::NonFinite(x_min, y_min, x_max, y_max));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::Degenerate(x_min, y_min, x_max, y_max));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Smallest box covering both.
    pub fn union_rect(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Clip to `[0, width) x [0, height)`. `None` when nothing remains.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<BBox> {
        BBox::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width as f64),
            self.y_max.min(height as f64),
        )
        .ok()
    }

    /// Integer pixel span covered under the half-open convention, clipped to
    /// the image. `None` when the box covers no pixel of the image.
    pub fn pixel_span(&self, width: usize, height: usize) -> Option<PixelRect> {
        let x0 = self.x_min.ceil().max(0.0);
        let y0 = self.y_min.ceil().max(0.0);
        let x1 = self.x_max.ceil().min(width as f64);
        let y1 = self.y_max.ceil().min(height as f64);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(PixelRect {
            x0: x0 as usize,
            y0: y0 as usize,
            x1: x1 as usize,
            y1: y1 as usize,
        })
    }

    /// Lexicographic total order on the four coordinates.
    pub fn total_cmp(&self, other: &BBox) -> Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
    pub fn len(&self) -> usize {
        self.width() * self.height()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// A box tagged with an object category (a ground-truth or reference box).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub category: Category,
}

impl LabeledBox {
    pub fn new(bbox: BBox, category: Category) -> Result<Self, GeometryError> {
        check_category(category as u32)?;
        Ok(Self { bbox, category })
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Detection with a full per-class confidence vector.
///
/// `scores[j - 1]` holds the confidence for category `j`; slots past the end
/// of the vector read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub category: Category,
    pub scores: Vec<f64>,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(
        bbox: BBox,
        category: Category,
        scores: Vec<f64>,
        score: f64,
    ) -> Result<Self, GeometryError> {
        check_category(category as u32)?;
        for &s in scores.iter().chain(std::iter::once(&score)) {
            if !(0.0..=1.0).contains(&s) {
                return Err(GeometryError::BadScore(s));
            }
        }
        Ok(Self { bbox, category, scores, score })
    }

    /// Box whose only non-zero confidence is `score` on its own category.
    pub fn single(bbox: BBox, category: Category, score: f64) -> Result<Self, GeometryError> {
        let mut scores = vec![0.0; category.max(1) as usize];
        if category >= 1 {
            scores[category as usize - 1] = score;
        }
        Self::new(bbox, category, scores, score)
    }

    pub fn score_for(&self, category: Category) -> f64 {
        if category == 0 {
            return 0.0;
        }
        self.scores.get(category as usize - 1).copied().unwrap_or(0.0)
    }

    /// Total order used for deterministic processing: coordinates, category,
    /// ranking score, then the score vector.
    pub fn total_cmp(&self, other: &ScoredBox) -> Ordering {
        self.bbox
            .total_cmp(&other.bbox)
            .then(self.category.cmp(&other.category))
            .then(self.score.total_cmp(&other.score))
            .then_with(|| {
                for (a, b) in self.scores.iter().zip(&other.scores) {
                    match a.total_cmp(b) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                self.scores.len().cmp(&other.scores.len())
            })
    }
}

pub(crate) fn check_category(category: u32) -> Result<(), GeometryError> {
    if category == 0 || category >= IGNORE as u32 {
        Err(GeometryError::BadCategory(category))
    } else {
        Ok(())
    }
}

/// Anything NMS can rank and suppress.
pub trait Detection {
    fn bbox(&self) -> &BBox;
    fn category(&self) -> Category;
    fn rank_score(&self) -> f64;

    /// Final tie-break after score, `x_min` and `y_min`.
    fn tie_break(&self, other: &Self) -> Ordering;
}

impl Detection for ScoredBox {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }
    fn category(&self) -> Category {
        self.category
    }
    fn rank_score(&self) -> f64 {
        self.score
    }
    fn tie_break(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

/// Ranking order: score descending, then `x_min`, then `y_min` ascending.
pub fn rank_order<D: Detection>(a: &D, b: &D) -> Ordering {
    b.rank_score()
        .total_cmp(&a.rank_score())
        .then(a.bbox().x_min.total_cmp(&b.bbox().x_min))
        .then(a.bbox().y_min.total_cmp(&b.bbox().y_min))
        .then_with(|| a.category().cmp(&b.category()))
        .then_with(|| a.tie_break(b))
}

/// Greedy per-class non-maximum suppression. A box survives iff its IOU
/// with every already-kept box of the same category is `<= threshold`.
pub fn nms<D: Detection + Clone>(boxes: &[D], threshold: f64) -> Vec<D> {
    let mut order: Vec<&D> = boxes.iter().collect();
    order.sort_by(|a, b| rank_order(*a, *b));

    let mut kept: Vec<&D> = Vec::with_capacity(order.len());
    for cand in order {
        let suppressed = kept.iter().any(|k| {
            k.category() == cand.category() && iou(k.bbox(), cand.bbox()) > threshold
        });
        if !suppressed {
            kept.push(cand);
        }
    }
    // `kept` is already in ranking order.
    kept.into_iter().cloned().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sides {
    pub left: bool,
    pub top: bool,
    pub right: bool,
    pub bottom: bool,
}

impl Sides {
    pub fn count(&self) -> usize {
        [self.left, self.top, self.right, self.bottom]
            .iter()
            .filter(|&&s| s)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// The touch predicate: at least two shared sides.
    pub fn touching(&self) -> bool {
        self.count() >= 2
    }
}

/// Sides of `reference` matched by `predicted` within `tol` of the reference
/// extent (width for left/right, height for top/bottom). Non-intersecting
/// pairs touch nowhere.
pub fn touch_sides(reference: &BBox, predicted: &BBox, tol: f64) -> Sides {
    if !reference.intersects(predicted) {
        return Sides::default();
    }
    let tx = tol * reference.width();
    let ty = tol * reference.height();
    Sides {
        left: (reference.x_min - predicted.x_min).abs() <= tx,
        top: (reference.y_min - predicted.y_min).abs() <= ty,
        right: (reference.x_max - predicted.x_max).abs() <= tx,
        bottom: (reference.y_max - predicted.y_max).abs() <= ty,
    }
}

pub fn touch(reference: &BBox, predicted: &BBox, tol: f64) -> bool {
    touch_sides(reference, predicted, tol).touching()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CropError {
    #[error("boxes do not touch on at least two sides")]
    NotTouching,
    #[error("crop collapsed to a degenerate box")]
    Degenerate,
}

/// Combine the touching sides of `reference` with the remaining sides of
/// `predicted`.
pub fn crop(reference: &BBox, predicted: &BBox, tol: f64) -> Result<BBox, CropError> {
    let sides = touch_sides(reference, predicted, tol);
    if !sides.touching() {
        return Err(CropError::NotTouching);
    }
    let pick = |touching: bool, r: f64, p: f64| if touching { r } else { p };
    BBox::new(
        pick(sides.left, reference.x_min, predicted.x_min),
        pick(sides.top, reference.y_min, predicted.y_min),
        pick(sides.right, reference.x_max, predicted.x_max),
        pick(sides.bottom, reference.y_max, predicted.y_max),
    )
    .map_err(|_| CropError::Degenerate)
}
