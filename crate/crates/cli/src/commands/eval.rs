use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crosstask::eval::{mean_ap, mean_iou, tide_breakdown, ErrorKind};
use crosstask::mask::SemanticMask;
use serde::{Deserialize, Serialize};

use super::CommandReport;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{read_mask, BoxesDocument};
use crate::io::write_atomic;

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub predictions: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub pred_masks: Option<PathBuf>,
    pub gt_masks: Option<PathBuf>,
    /// Machine-readable report destination.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub map: f64,
    pub map_defined: bool,
    pub thresholds: Vec<f64>,
    pub ap_per_threshold: Vec<f64>,
    /// Category -> AP at each threshold.
    pub ap_per_class: BTreeMap<String, Vec<f64>>,
    pub tide: TideTable,
}

/// The eight error columns: AP gains for the six error types, then raw
/// false-positive and false-negative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TideTable {
    pub cls: f64,
    pub loc: f64,
    pub both: f64,
    pub dupe: f64,
    pub bkg: f64,
    pub miss: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub miou: f64,
    pub miou_defined: bool,
    pub iou_per_class: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub detection: Option<DetectionReport>,
    pub segmentation: Option<SegmentationReport>,
}

impl EvalReportFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<CommandReport> {
    let detection = match (&args.predictions, &args.ground_truth) {
        (Some(p), Some(g)) => Some(evaluate_detection(p, g, cfg)?),
        (None, None) => None,
        _ => return Err(CliError::Usage("--predictions and --ground-truth go together".into())),
    };
    let segmentation = match (&args.pred_masks, &args.gt_masks) {
        (Some(p), Some(g)) => Some(evaluate_segmentation(p, g, cfg)?),
        (None, None) => None,
        _ => return Err(CliError::Usage("--pred-masks and --gt-masks go together".into())),
    };
    if detection.is_none() && segmentation.is_none() {
        return Err(CliError::Usage("nothing to evaluate: give detection and/or mask inputs".into()));
    }
    let file = EvalReportFile { detection, segmentation };
    if let Some(out) = &args.out {
        write_atomic(out, file.to_json().as_bytes())?;
    }
    Ok(CommandReport { lines: render_table(&file), ..Default::default() })
}

fn evaluate_detection(pred_path: &Path, gt_path: &Path, cfg: &RunConfig) -> Result<DetectionReport> {
    let preds = BoxesDocument::read(pred_path)?;
    let gts = BoxesDocument::read(gt_path)?;
    let pred_ids: BTreeSet<&str> = preds.images.iter().map(|i| i.id.as_str()).collect();
    let gt_ids: BTreeSet<&str> = gts.images.iter().map(|i| i.id.as_str()).collect();
    if pred_ids != gt_ids || pred_ids.len() != preds.images.len() || gt_ids.len() != gts.images.len() {
        let only_pred: Vec<_> = pred_ids.difference(&gt_ids).collect();
        let only_gt: Vec<_> = gt_ids.difference(&pred_ids).collect();
        return Err(CliError::data(
            pred_path,
            format!("image ids differ from ground truth (only in predictions: {only_pred:?}; only in ground truth: {only_gt:?}; or duplicated ids)"),
        ));
    }
    let mut dets = Vec::with_capacity(gts.images.len());
    let mut truth = Vec::with_capacity(gts.images.len());
    for g in &gts.images {
        let p = preds.image(&g.id).expect("id sets are equal");
        dets.push(p.scored(cfg.num_classes).map_err(|m| CliError::data(pred_path, m))?);
        truth.push(g.labeled());
    }

    let map = mean_ap(&dets, &truth);
    let tide = tide_breakdown(&dets, &truth, cfg.foreground_iou, cfg.background_iou);
    Ok(DetectionReport {
        map: map.value,
        map_defined: map.defined,
        thresholds: map.thresholds,
        ap_per_threshold: map.per_threshold,
        ap_per_class: map.per_class.into_iter().map(|(c, v)| (c.to_string(), v)).collect(),
        tide: TideTable {
            cls: tide.delta(ErrorKind::Cls),
            loc: tide.delta(ErrorKind::Loc),
            both: tide.delta(ErrorKind::Both),
            dupe: tide.delta(ErrorKind::Dupe),
            bkg: tide.delta(ErrorKind::Bkg),
            miss: tide.delta(ErrorKind::Miss),
            fp: tide.false_positives,
            fn_: tide.false_negatives,
            counts: ErrorKind::ALL.iter().map(|&k| (k.as_str().to_string(), tide.count(k))).collect(),
        },
    })
}

fn mask_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !matches!(ext, "png" | "pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        if files.insert(stem.clone(), path).is_some() {
            return Err(CliError::data(dir, format!("two mask files for image {stem:?}")));
        }
    }
    Ok(files)
}

fn evaluate_segmentation(pred_dir: &Path, gt_dir: &Path, cfg: &RunConfig) -> Result<SegmentationReport> {
    let preds = mask_files(pred_dir)?;
    let gts = mask_files(gt_dir)?;
    if preds.keys().ne(gts.keys()) {
        return Err(CliError::data(pred_dir, format!("mask image ids differ from {}", gt_dir.display())));
    }
    let mut p: Vec<SemanticMask> = Vec::with_capacity(preds.len());
    let mut g: Vec<SemanticMask> = Vec::with_capacity(gts.len());
    for (id, path) in &gts {
        let gm = read_mask(path, cfg.num_classes)?;
        let pm = read_mask(&preds[id], cfg.num_classes)?;
        pm.same_shape(&gm).map_err(|e| CliError::data(&preds[id], e.to_string()))?;
        p.push(pm);
        g.push(gm);
    }
    let r = mean_iou(&p, &g).map_err(|e| CliError::data(pred_dir, e.to_string()))?;
    Ok(SegmentationReport {
        miou: r.value,
        miou_defined: r.defined,
        iou_per_class: r.per_class.into_iter().map(|(c, v)| (c.to_string(), v)).collect(),
    })
}

fn render_table(file: &EvalReportFile) -> Vec<String> {
    let mut lines = Vec::new();
    if let Some(d) = &file.detection {
        let flag = if d.map_defined { "" } else { " (undefined: no ground truth)" };
        lines.push(format!("mAP@[.50:.95] {:.4}{flag}", d.map));
        let per: Vec<String> = d
            .thresholds
            .iter()
            .zip(&d.ap_per_threshold)
            .map(|(t, a)| format!("{t:.2}:{a:.4}"))
            .collect();
        lines.push(format!("AP per IOU    {}", per.join(" ")));
        let t = &d.tide;
        lines.push(format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>6} {:>6}",
            "Cls", "Loc", "Both", "Dupe", "Bkg", "Miss", "FP", "FN"
        ));
        lines.push(format!(
            "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6}",
            t.cls, t.loc, t.both, t.dupe, t.bkg, t.miss, t.fp, t.fn_
        ));
    }
    if let Some(s) = &file.segmentation {
        let flag = if s.miou_defined { "" } else { " (undefined: no labelled pixels)" };
        lines.push(format!("mIOU          {:.4}{flag}", s.miou));
    }
    lines
}
