//! Box annotation documents.
//!
//! ```text
//! { "images": [ { "id", "width", "height",
//!     "boxes": [ { "bbox": [x_min, y_min, x_max, y_max], "category",
//!                  "scores"?, "score"?, "origin"?, "train_classification"? } ] } ] }
//! ```
//!
//! Writing is byte-stable: fields in the order above, numbers with six
//! decimals, one box per line.

use std::fmt::Write as _;
use std::path::Path;

use crosstask::geometry::{BBox, Category, LabeledBox, ScoredBox};
use crosstask::refine::{Origin, RefinedBox};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::io::{read_text, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxRecord {
    pub bbox: BBox,
    pub category: Category,
    pub scores: Option<Vec<f64>>,
    pub score: Option<f64>,
    pub origin: Option<Origin>,
    pub train_classification: Option<bool>,
}

impl BoxRecord {
    pub fn ground_truth(b: &LabeledBox) -> Self {
        Self {
            bbox: b.bbox,
            category: b.category,
            scores: None,
            score: None,
            origin: None,
            train_classification: None,
        }
    }

    pub fn detection(b: &ScoredBox) -> Self {
        Self {
            bbox: b.bbox,
            category: b.category,
            scores: Some(b.scores.clone()),
            score: Some(b.score),
            origin: None,
            train_classification: None,
        }
    }

    pub fn refined(b: &RefinedBox) -> Self {
        Self {
            bbox: b.bbox,
            category: b.category,
            scores: None,
            score: Some(b.confidence),
            origin: Some(b.origin),
            train_classification: Some(b.train_classification),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BoxRecord>,
}

impl ImageRecord {
    pub fn labeled(&self) -> Vec<LabeledBox> {
        self.boxes.iter().map(|b| LabeledBox { bbox: b.bbox, category: b.category }).collect()
    }

    /// Boxes as detections. A scalar `score` without `scores` becomes a
    /// vector of `num_classes` entries holding the score in the box's own
    /// category slot; a `scores` vector without `score` ranks the box by its
    /// own category's entry.
    pub fn scored(&self, num_classes: u8) -> std::result::Result<Vec<ScoredBox>, String> {
        self.boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let scores = match (&b.scores, b.score) {
                    (Some(s), _) => s.clone(),
                    (None, Some(s)) => {
                        let mut v = vec![0.0; (num_classes as usize).max(b.category as usize)];
                        v[b.category as usize - 1] = s;
                        v
                    }
                    (None, None) => return Err(format!("image {:?}, box {i}: detection without a score", self.id)),
                };
                let score = b.score.unwrap_or_else(|| scores.get(b.category as usize - 1).copied().unwrap_or(0.0));
                ScoredBox::new(b.bbox, b.category, scores, score)
                    .map_err(|e| format!("image {:?}, box {i}: {e}", self.id))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoxesDocument {
    pub images: Vec<ImageRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    images: Vec<RawImage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: String,
    width: usize,
    height: usize,
    boxes: Vec<RawBox>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    bbox: Vec<f64>,
    category: i64,
    scores: Option<Vec<f64>>,
    score: Option<f64>,
    origin: Option<String>,
    train_classification: Option<bool>,
}

fn convert_box(raw: RawBox) -> std::result::Result<BoxRecord, String> {
    let [x0, y0, x1, y1] = raw.bbox[..] else {
        return Err(format!("bbox has {} numbers, expected 4", raw.bbox.len()));
    };
    let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| e.to_string())?;
    if !(1..255).contains(&raw.category) {
        return Err(format!("category {} is not an object category (1..=254)", raw.category));
    }
    let check = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(format!("score {v} outside [0, 1]"))
        }
    };
    if let Some(s) = &raw.scores {
        s.iter().try_for_each(|&v| check(v))?;
    }
    if let Some(s) = raw.score {
        check(s)?;
    }
    let origin = raw.origin.map(|o| o.parse::<Origin>()).transpose()?;
    Ok(BoxRecord {
        bbox,
        category: raw.category as Category,
        scores: raw.scores,
        score: raw.score,
        origin,
        train_classification: raw.train_classification,
    })
}

impl BoxesDocument {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let raw: RawDocument = serde_json::from_str(text).map_err(|e| format!("malformed boxes document: {e}"))?;
        let mut images = Vec::with_capacity(raw.images.len());
        for (ii, img) in raw.images.into_iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(format!("image {ii} ({:?}): zero width or height", img.id));
            }
            let mut boxes = Vec::with_capacity(img.boxes.len());
            for (bi, b) in img.boxes.into_iter().enumerate() {
                boxes.push(convert_box(b).map_err(|e| format!("image {ii} ({:?}), box {bi}: {e}", img.id))?);
            }
            images.push(ImageRecord { id: img.id, width: img.width, height: img.height, boxes });
        }
        Ok(Self { images })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|m| CliError::data(path, m))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("{\n  \"images\": [");
        for (ii, img) in self.images.iter().enumerate() {
            out.push_str(if ii == 0 { "\n" } else { ",\n" });
            let id = serde_json::to_string(&img.id).expect("string serialization");
            let _ = write!(
                out,
                "    {{\n      \"id\": {id},\n      \"width\": {},\n      \"height\": {},\n      \"boxes\": [",
                img.width, img.height
            );
            for (bi, b) in img.boxes.iter().enumerate() {
                out.push_str(if bi == 0 { "\n        " } else { ",\n        " });
                write_box(&mut out, b);
            }
            out.push_str(if img.boxes.is_empty() { "]\n    }" } else { "\n      ]\n    }" });
        }
        out.push_str(if self.images.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }
}

pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn write_box(out: &mut String, b: &BoxRecord) {
    let [x0, y0, x1, y1] = b.bbox.coords();
    let _ = write!(
        out,
        "{{\"bbox\": [{}, {}, {}, {}], \"category\": {}",
        fmt6(x0),
        fmt6(y0),
        fmt6(x1),
        fmt6(y1),
        b.category
    );
    if let Some(scores) = &b.scores {
        let joined: Vec<String> = scores.iter().map(|&s| fmt6(s)).collect();
        let _ = write!(out, ", \"scores\": [{}]", joined.join(", "));
    }
    if let Some(s) = b.score {
        let _ = write!(out, ", \"score\": {}", fmt6(s));
    }
    if let Some(o) = b.origin {
        let _ = write!(out, ", \"origin\": \"{o}\"");
    }
    if let Some(t) = b.train_classification {
        let _ = write!(out, ", \"train_classification\": {t}");
    }
    out.push('}');
}
