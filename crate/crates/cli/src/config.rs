//! Run configuration: a flat text file of `key = value` lines. `#` starts a
//! comment; blank lines are skipped; unknown or repeated keys are errors.
//! `seed` is required.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crosstask::losses::{DEFAULT_KEY_CAPACITY, DEFAULT_LAMBDA, DEFAULT_MARGIN};
use crosstask::eval::{DEFAULT_BACKGROUND_IOU, DEFAULT_FOREGROUND_IOU};
use crosstask::refine::RefinementParams;
use crosstask::segmenter::{GrabCutParams, SegmenterOptions, SegmenterRegistry};

use crate::error::{CliError, Result};
use crate::io::read_text;

pub const DEFAULT_NUM_CLASSES: u8 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of object categories `n_c`.
    pub num_classes: u8,
    pub segmenter: String,
    pub refine: RefinementParams,
    pub grabcut: GrabCutParams,
    pub lambda: f64,
    pub gamma: f64,
    pub key_capacity: usize,
    pub foreground_iou: f64,
    pub background_iou: f64,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for everything but the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            num_classes: DEFAULT_NUM_CLASSES,
            segmenter: "grabcut".into(),
            refine: RefinementParams::default(),
            grabcut: GrabCutParams::default(),
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_MARGIN,
            key_capacity: DEFAULT_KEY_CAPACITY,
            foreground_iou: DEFAULT_FOREGROUND_IOU,
            background_iou: DEFAULT_BACKGROUND_IOU,
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| CliError::Config { path: origin.to_string(), line, message };
        let mut cfg = Self::with_seed(0);
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let n = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(n, format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(n, format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|m| err(n, m))?;
        }
        if !seen.contains("seed") {
            return Err(err(0, "missing required key `seed`".into()));
        }
        cfg.validate().map_err(|m| err(0, m))?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        let r = &mut self.refine;
        let g = &mut self.grabcut;
        match key {
            "seed" => self.seed = num(key, value)?,
            "num_classes" => self.num_classes = num(key, value)?,
            "segmenter" => self.segmenter = value.to_string(),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "refine.split_conf" => r.split_conf = num(key, value)?,
            "refine.split_iou" => r.split_iou = num(key, value)?,
            "refine.split_bonus" => r.split_bonus = num(key, value)?,
            "refine.merge_conf" => r.merge_conf = num(key, value)?,
            "refine.merge_bonus" => r.merge_bonus = num(key, value)?,
            "refine.conf_cap" => r.conf_cap = num(key, value)?,
            "refine.add_conf" => r.add_conf = num(key, value)?,
            "refine.add_iou" => r.add_iou = num(key, value)?,
            "refine.nms_iou" => r.nms_iou = num(key, value)?,
            "refine.touch_tol" => r.touch_tol = num(key, value)?,
            "refine.max_powerset_members" => r.max_powerset_members = num(key, value)?,
            "grabcut.iterations" => g.iterations = num(key, value)?,
            "grabcut.components" => g.components = num(key, value)?,
            "grabcut.lambda" => g.lambda_smooth = num(key, value)?,
            "grabcut.covariance_epsilon" => g.covariance_epsilon = num(key, value)?,
            "grabcut.kmeans_iterations" => g.kmeans_iterations = num(key, value)?,
            "grabcut.solver" => g.solver = value.to_string(),
            "loss.lambda" => self.lambda = num(key, value)?,
            "loss.gamma" => self.gamma = num(key, value)?,
            "loss.key_capacity" => self.key_capacity = num(key, value)?,
            "tide.foreground_iou" => self.foreground_iou = num(key, value)?,
            "tide.background_iou" => self.background_iou = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.num_classes == 0 || self.num_classes == 255 {
            return Err(format!("num_classes must be in 1..=254, got {}", self.num_classes));
        }
        self.refine.validate().map_err(|e| e.to_string())?;
        self.grabcut.validate().map_err(|e| e.to_string())?;
        self.segmenter_options_check()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(format!("loss.lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(format!("loss.gamma must be positive, got {}", self.gamma));
        }
        if self.key_capacity == 0 {
            return Err("loss.key_capacity must be at least 1".into());
        }
        let (f, b) = (self.foreground_iou, self.background_iou);
        if !(0.0 < b && b < f && f < 1.0) {
            return Err(format!("need 0 < tide.background_iou < tide.foreground_iou < 1, got {b} and {f}"));
        }
        Ok(())
    }

    fn segmenter_options_check(&self) -> std::result::Result<(), String> {
        SegmenterRegistry::with_builtins()
            .create(&self.segmenter, &self.segmenter_options())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    pub fn segmenter_options(&self) -> SegmenterOptions {
        SegmenterOptions { grabcut: self.grabcut.clone() }
    }
}
