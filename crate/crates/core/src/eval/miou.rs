use std::collections::BTreeMap;

use crate::geometry::{Category, IGNORE};
use crate::mask::{MaskError, SemanticMask};

#[derive(Debug, Clone, PartialEq)]
pub struct MeanIou {
    /// Mean over classes with a non-empty union; 0 when there is none.
    pub value: f64,
    pub defined: bool,
    /// Dataset-level IOU per class.
    pub per_class: BTreeMap<Category, f64>,
}

/// Dataset-level mean IOU. Intersections and unions are summed over all
/// image pairs before dividing; a pixel labelled ignore on either side is
/// skipped.
pub fn mean_iou(preds: &[SemanticMask], gts: &[SemanticMask]) -> Result<MeanIou, MaskError> {
    if preds.len() != gts.len() {
        return Err(MaskError::CountMismatch(preds.len(), gts.len()));
    }
    let mut inter = [0u64; 256];
    let mut union = [0u64; 256];
    for (p, g) in preds.iter().zip(gts) {
        p.same_shape(g)?;
        for (&a, &b) in p.labels().iter().zip(g.labels()) {
            if a == IGNORE || b == IGNORE {
                continue;
            }
            if a == b {
                inter[a as usize] += 1;
                union[a as usize] += 1;
            } else {
                union[a as usize] += 1;
                union[b as usize] += 1;
            }
        }
    }
    let per_class: BTreeMap<Category, f64> = (0..256)
        .filter(|&c| union[c] > 0)
        .map(|c| (c as Category, inter[c] as f64 / union[c] as f64))
        .collect();
    let defined = !per_class.is_empty();
    let value = if defined { per_class.values().sum::<f64>() / per_class.len() as f64 } else { 0.0 };
    Ok(MeanIou { value, defined, per_class })
}
