//! Pseudo segmentation targets from ground-truth boxes: the box-filled mask
//! and the coarse mask produced by a [`CoarseSegmenter`], confined to the
//! box-filled foreground.

use image::RgbImage;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Category, LabeledBox, BACKGROUND};
use crate::mask::{MaskError, SemanticMask};
use crate::segmenter::{CoarseSegmenter, SegmentError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PseudoError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{count} pixels are foreground in the coarse mask but background in the box mask (first at x={x}, y={y})")]
    FilterViolation { count: usize, x: usize, y: usize },
    #[error("coarse pixel (x={x}, y={y}) has category {category} but lies in no box of that category")]
    OutsideBoxes { x: usize, y: usize, category: Category },
}

/// Box-filled mask plus coarse mask of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMaskPair {
    pub box_mask: SemanticMask,
    pub coarse_mask: SemanticMask,
}

impl PseudoMaskPair {
    /// Pixels that are foreground in the coarse mask but background in the
    /// box mask.
    pub fn filter_violations(&self) -> usize {
        self.box_mask
            .labels()
            .iter()
            .zip(self.coarse_mask.labels())
            .filter(|(&b, &c)| b == BACKGROUND && c != BACKGROUND)
            .count()
    }

    /// Check both pair invariants against the boxes the pair was made from.
    pub fn verify(&self, boxes: &[LabeledBox]) -> Result<(), PseudoError> {
        self.box_mask.same_shape(&self.coarse_mask)?;
        let w = self.box_mask.width();
        let count = self.filter_violations();
        if count > 0 {
            let first = self
                .box_mask
                .labels()
                .iter()
                .zip(self.coarse_mask.labels())
                .position(|(&b, &c)| b == BACKGROUND && c != BACKGROUND)
                .expect("count > 0");
            return Err(PseudoError::FilterViolation { count, x: first % w, y: first / w });
        }
        let spans: Vec<_> = boxes
            .iter()
            .filter_map(|b| b.bbox.pixel_span(w, self.box_mask.height()).map(|s| (s, b.category)))
            .collect();
        for (i, &c) in self.coarse_mask.labels().iter().enumerate() {
            if c == BACKGROUND {
                continue;
            }
            let (x, y) = (i % w, i / w);
            if !spans.iter().any(|(s, cat)| *cat == c && s.contains(x, y)) {
                return Err(PseudoError::OutsideBoxes { x, y, category: c });
            }
        }
        Ok(())
    }
}

/// Boxes in paint order: larger first, so smaller ones overwrite them;
/// equal areas paint the lower category first.
fn paint_order(boxes: &[LabeledBox], width: usize, height: usize) -> Vec<usize> {
    let area = |b: &LabeledBox| b.bbox.clamp_to(width, height).map_or(0.0, |c| c.area());
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].bbox.pixel_span(width, height).is_some())
        .collect();
    order.sort_by(|&a, &b| {
        area(&boxes[b])
            .total_cmp(&area(&boxes[a]))
            .then(boxes[a].category.cmp(&boxes[b].category))
            .then(boxes[a].bbox.total_cmp(&boxes[b].bbox))
    });
    order
}

/// Fill each box with its category, smaller boxes taking priority. Boxes are
/// clipped to the image.
pub fn box_fill(boxes: &[LabeledBox], width: usize, height: usize) -> Result<SemanticMask, MaskError> {
    let mut mask = SemanticMask::background(width, height)?;
    for i in paint_order(boxes, width, height) {
        let span = boxes[i].bbox.pixel_span(width, height).expect("filtered in paint_order");
        for y in span.y0..span.y1 {
            for x in span.x0..span.x1 {
                mask.set(x, y, boxes[i].category);
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMask {
    pub mask: SemanticMask,
    /// One entry per box whose segmentation failed and was replaced by a
    /// full-box fill.
    pub warnings: Vec<String>,
}

/// Per-box seed derived from the run seed and the box's input index.
fn box_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Segment each box (in parallel), paint foreground in box-fill order, then
/// zero every pixel outside all boxes.
pub fn make_coarse_mask(
    image: &RgbImage,
    boxes: &[LabeledBox],
    segmenter: &dyn CoarseSegmenter,
    seed: u64,
) -> Result<CoarseMask, PseudoError> {
    let (width, height) = (image.width() as usize, image.height() as usize);
    let order = paint_order(boxes, width, height);
    let results: Vec<Result<_, SegmentError>> = order
        .par_iter()
        .map(|&i| segmenter.segment(image, &boxes[i].bbox, box_seed(seed, i)))
        .collect();

    let mut mask = SemanticMask::background(width, height)?;
    let mut warnings = Vec::new();
    for (&i, result) in order.iter().zip(results) {
        let b = &boxes[i];
        let span = b.bbox.pixel_span(width, height).expect("filtered in paint_order");
        let fg = result.and_then(|fg| {
            if fg.width() == span.width() && fg.height() == span.height() {
                Ok(fg)
            } else {
                Err(SegmentError::BadOutputShape {
                    got_w: fg.width(),
                    got_h: fg.height(),
                    want_w: span.width(),
                    want_h: span.height(),
                })
            }
        });
        match fg {
            Ok(fg) => {
                for y in span.y0..span.y1 {
                    for x in span.x0..span.x1 {
                        if fg.get(x - span.x0, y - span.y0) {
                            mask.set(x, y, b.category);
                        }
                    }
                }
            }
            Err(e) => {
                warnings.push(format!(
                    "box {i} {} (category {}): {} failed ({e}); filled whole box",
                    b.bbox,
                    b.category,
                    segmenter.name()
                ));
                for y in span.y0..span.y1 {
                    for x in span.x0..span.x1 {
                        mask.set(x, y, b.category);
                    }
                }
            }
        }
    }

    let filter = box_fill(boxes, width, height)?;
    let mut labels = mask.into_labels();
    for (c, &f) in labels.iter_mut().zip(filter.labels()) {
        if f == BACKGROUND {
            *c = BACKGROUND;
        }
    }
    Ok(CoarseMask { mask: SemanticMask::new(width, height, labels)?, warnings })
}

pub fn make_pseudo_pair(
    image: &RgbImage,
    boxes: &[LabeledBox],
    segmenter: &dyn CoarseSegmenter,
    seed: u64,
) -> Result<(PseudoMaskPair, Vec<String>), PseudoError> {
    let box_mask = box_fill(boxes, image.width() as usize, image.height() as usize)?;
    let coarse = make_coarse_mask(image, boxes, segmenter, seed)?;
    Ok((PseudoMaskPair { box_mask, coarse_mask: coarse.mask }, coarse.warnings))
}
