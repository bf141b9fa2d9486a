//! Semantic label maps and 8-connected component extraction.

use thiserror::Error;

use crate::geometry::{BBox, Category, BACKGROUND, IGNORE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("label buffer has {got} entries, expected {width}x{height}")]
    Length { width: usize, height: usize, got: usize },
    #[error("mask must have non-zero dimensions")]
    Empty,
    #[error("label {value} at (x={x}, y={y}) exceeds the {num_classes} object categories")]
    LabelOutOfRange { x: usize, y: usize, value: u8, num_classes: u8 },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("{0} predicted masks vs {1} ground-truth masks")]
    CountMismatch(usize, usize),
}

/// Row-major `width x height` category map. `0` is background, `255` ignore.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticMask {
    width: usize,
    height: usize,
    labels: Vec<Category>,
}

impl SemanticMask {
    pub fn new(width: usize, height: usize, labels: Vec<Category>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::Empty);
        }
        if labels.len() != width * height {
            return Err(MaskError::Length { width, height, got: labels.len() });
        }
        Ok(Self { width, height, labels })
    }

    pub fn background(width: usize, height: usize) -> Result<Self, MaskError> {
        Self::new(width, height, vec![BACKGROUND; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Category] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<Category> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Category {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: Category) {
        self.labels[y * self.width + x] = value;
    }

    /// Check every label is background, ignore, or an object category
    /// `<= num_classes`. Reports the first offending pixel in raster order.
    pub fn validate(&self, num_classes: u8) -> Result<(), MaskError> {
        for (i, &v) in self.labels.iter().enumerate() {
            if v != IGNORE && v > num_classes {
                return Err(MaskError::LabelOutOfRange {
                    x: i % self.width,
                    y: i / self.width,
                    value: v,
                    num_classes,
                });
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &SemanticMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Object categories present, ascending.
    pub fn categories(&self) -> Vec<Category> {
        let mut seen = [false; 256];
        for &v in &self.labels {
            seen[v as usize] = true;
        }
        (1..IGNORE).filter(|&c| seen[c as usize]).collect()
    }
}

/// A maximal 8-connected region of one object category.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub category: Category,
    pub pixel_count: usize,
    /// Tight circumscribed rectangle (half-open).
    pub bounds: BBox,
}

/// Label every 8-connected region of each object category.
///
/// Output is ordered by category ascending, then by the raster position of
/// each component's first pixel.
pub fn connected_components(mask: &SemanticMask) -> Vec<Component> {
    let (w, h) = (mask.width, mask.height);
    let labels = &mask.labels;
    let mut visited = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    let mut out = Vec::new();

    for start in 0..w * h {
        let cat = labels[start];
        if visited[start] || cat == BACKGROUND || cat == IGNORE {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut count = 0usize;

        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);

            let ylo = y.saturating_sub(1);
            let yhi = (y + 1).min(h - 1);
            let xlo = x.saturating_sub(1);
            let xhi = (x + 1).min(w - 1);
            for ny in ylo..=yhi {
                for nx in xlo..=xhi {
                    let n = ny * w + nx;
                    if !visited[n] && labels[n] == cat {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }

        out.push(Component {
            category: cat,
            pixel_count: count,
            bounds: BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)
                .expect("component bounds cover at least one pixel"),
        });
    }

    // Stable: raster order of first pixels is preserved within a category.
    out.sort_by_key(|c| c.category);
    out
}
