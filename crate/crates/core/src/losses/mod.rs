//! Loss kernels with analytic gradients: pixel-wise softmax cross-entropy
//! against coarse masks, attention-map MSE against box masks, logit
//! modulation, the triplet object loss over per-box mean embeddings, and
//! the combined two-task objective.

mod triplet;

pub use triplet::{
    keystore_update, mean_box_embedding, select_triplet, triplet_hinge, triplet_object_loss, KeyStore,
    SharedKeyStore, TripletOutcome, DEFAULT_KEY_CAPACITY, DEFAULT_MARGIN,
};

use thiserror::Error;

use crate::geometry::IGNORE;
use crate::mask::SemanticMask;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} at pixel {index} has no channel (channels = {channels})")]
    LabelOutOfRange { index: usize, label: u8, channels: usize },
    #[error("embedding norm {norm} is not unit length")]
    NotUnit { norm: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Dense `height x width x channels` field of doubles, stored pixel-major
/// (`data[(y * width + x) * channels + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Logits, attention maps and modulated logits: `n_c + 1` channels.
pub type LogitField = Field;
/// Per-pixel feature vectors.
pub type EmbeddingField = Field;

impl Field {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(LossError::Shape(format!("empty field {width}x{height}x{channels}")));
        }
        if data.len() != width * height * channels {
            return Err(LossError::Shape(format!(
                "{} values for a {width}x{height}x{channels} field",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite("field"));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        self.pixel(y * self.width + x)
    }

    pub fn same_shape(&self, other: &Field) -> Result<(), LossError> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(LossError::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    fn matches_mask(&self, mask: &SemanticMask) -> Result<(), LossError> {
        if (self.width, self.height) != (mask.width(), mask.height()) {
            return Err(LossError::Shape(format!(
                "field {}x{} vs mask {}x{}",
                self.width,
                self.height,
                mask.width(),
                mask.height()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// Mean softmax cross-entropy of `logits` against `target` over non-ignore
/// pixels, and its gradient with respect to `logits`.
pub fn ce_loss(logits: &LogitField, target: &SemanticMask) -> Result<(f64, LogitField), LossError> {
    logits.matches_mask(target)?;
    let c = logits.channels;
    let mut grad = Field::zeros(logits.width, logits.height, c);
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, &label) in target.labels().iter().enumerate() {
        if label == IGNORE {
            continue;
        }
        if label as usize >= c {
            return Err(LossError::LabelOutOfRange { index: i, label, channels: c });
        }
        let row = logits.pixel(i);
        total -= log_softmax(row)[label as usize];
        let p = softmax(row);
        let g = &mut grad.data[i * c..(i + 1) * c];
        g.copy_from_slice(&p);
        g[label as usize] -= 1.0;
        counted += 1;
    }
    if counted == 0 {
        return Ok((0.0, grad));
    }
    let n = counted as f64;
    grad.data.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Mean squared distance between the attention map and the one-hot box
/// mask; ignore pixels are skipped.
pub fn attention_mse(alpha: &LogitField, box_mask: &SemanticMask) -> Result<(f64, LogitField), LossError> {
    alpha.matches_mask(box_mask)?;
    let c = alpha.channels;
    let mut grad = Field::zeros(alpha.width, alpha.height, c);
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, &label) in box_mask.labels().iter().enumerate() {
        if label == IGNORE {
            continue;
        }
        if label as usize >= c {
            return Err(LossError::LabelOutOfRange { index: i, label, channels: c });
        }
        let a = alpha.pixel(i);
        let g = &mut grad.data[i * c..(i + 1) * c];
        for j in 0..c {
            let target = if j == label as usize { 1.0 } else { 0.0 };
            let d = a[j] - target;
            total += d * d;
            g[j] = 2.0 * d;
        }
        counted += 1;
    }
    if counted == 0 {
        return Ok((0.0, grad));
    }
    let n = counted as f64;
    grad.data.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Elementwise (Hadamard) product of logits and attention.
pub fn modulate(logits: &LogitField, alpha: &LogitField) -> Result<LogitField, LossError> {
    logits.same_shape(alpha)?;
    let data = logits.data.iter().zip(&alpha.data).map(|(l, a)| l * a).collect();
    Ok(Field { data, ..*logits })
}

/// Back-propagate `upstream = dL/dM` through `M = logits * alpha`, returning
/// `(dL/dlogits, dL/dalpha)`.
pub fn modulate_backward(
    logits: &LogitField,
    alpha: &LogitField,
    upstream: &LogitField,
) -> Result<(LogitField, LogitField), LossError> {
    logits.same_shape(alpha)?;
    logits.same_shape(upstream)?;
    let d_logits = upstream.data.iter().zip(&alpha.data).map(|(g, a)| g * a).collect();
    let d_alpha = upstream.data.iter().zip(&logits.data).map(|(g, l)| g * l).collect();
    Ok((Field { data: d_logits, ..*logits }, Field { data: d_alpha, ..*logits }))
}

/// Scalar loss components supplied to [`combined_loss`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub l_det_supervised: f64,
    /// Localization-only loss on refined boxes, computed by the detector.
    pub l_m4b: f64,
    pub l_seg_supervised: f64,
    pub l_s: f64,
    pub l_alpha: f64,
    pub l_object: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_det_supervised: f64,
    pub l_m4b: f64,
    pub l_seg_supervised: f64,
    pub l_s: f64,
    pub l_alpha: f64,
    pub l_object: f64,
    pub l_b4m: f64,
    pub lambda: f64,
    pub total: f64,
}

pub const DEFAULT_LAMBDA: f64 = 2.0;

/// `(det + m4b) + lambda * (seg + s + alpha + object)`.
pub fn combined_loss(parts: &LossParts, lambda: f64) -> Result<LossBreakdown, LossError> {
    let values = [
        parts.l_det_supervised,
        parts.l_m4b,
        parts.l_seg_supervised,
        parts.l_s,
        parts.l_alpha,
        parts.l_object,
        lambda,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(LossError::NonFinite("loss parts"));
    }
    let l_b4m = parts.l_s + parts.l_alpha + parts.l_object;
    let total = (parts.l_det_supervised + parts.l_m4b) + lambda * (parts.l_seg_supervised + l_b4m);
    Ok(LossBreakdown {
        l_det_supervised: parts.l_det_supervised,
        l_m4b: parts.l_m4b,
        l_seg_supervised: parts.l_seg_supervised,
        l_s: parts.l_s,
        l_alpha: parts.l_alpha,
        l_object: parts.l_object,
        l_b4m,
        lambda,
        total,
    })
}
