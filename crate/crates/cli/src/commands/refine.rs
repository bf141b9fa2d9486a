use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crosstask::refine::{refine_from_mask, Origin};
use rayon::prelude::*;

use super::CommandReport;
use crate::config::RunConfig;
use crate::error::Result;
use crate::formats::{read_mask, BoxRecord, BoxesDocument, ImageRecord};
use crate::io::write_atomic;
use crate::manifest::{DatasetManifest, Record, TaskTag};
use crate::pool;

#[derive(Debug, Clone)]
pub struct RefineArgs {
    pub manifest: PathBuf,
    /// Holds `<image_id>.json` prediction documents.
    pub predictions: PathBuf,
    pub out: PathBuf,
    /// Treat a missing predictions file as "no predictions".
    pub allow_missing: bool,
}

struct ImageResult {
    counts: BTreeMap<Origin, usize>,
    warning: Option<String>,
}

/// Refined boxes for every segmentation-annotated image, written to
/// `<out>/refined/<image_id>.json`, plus `<out>/refine_summary.json`.
pub fn cmd_refine(args: &RefineArgs, cfg: &RunConfig) -> Result<CommandReport> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let records: Vec<&Record> = manifest.tagged(TaskTag::Seg).collect();
    let results: Vec<std::result::Result<ImageResult, String>> =
        pool::run(|| records.par_iter().map(|r| refine_record(r, args, cfg)).collect())?;

    let mut report = CommandReport::default();
    let mut totals: BTreeMap<Origin, usize> = Origin::ALL.iter().map(|&o| (o, 0)).collect();
    let mut skipped = Vec::new();
    let mut refined = 0usize;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(r) => {
                refined += 1;
                for (o, n) in r.counts {
                    *totals.entry(o).or_default() += n;
                }
                report.warnings.extend(r.warning);
            }
            Err(message) => {
                report.partial = true;
                report.warnings.push(format!("{}: skipped: {message}", record.image_id));
                skipped.push(record.image_id.clone());
            }
        }
    }

    let total: usize = totals.values().sum();
    let mut summary = String::from("{\n");
    summary.push_str(&format!("  \"images_refined\": {refined},\n"));
    summary.push_str(&format!(
        "  \"images_skipped\": {},\n",
        serde_json::to_string(&skipped).expect("string list")
    ));
    summary.push_str("  \"origins\": {");
    let parts: Vec<String> = totals.iter().map(|(o, n)| format!("\"{o}\": {n}")).collect();
    summary.push_str(&parts.join(", "));
    summary.push_str(&format!("}},\n  \"total_boxes\": {total}\n}}\n"));
    write_atomic(&args.out.join("refine_summary.json"), summary.as_bytes())?;

    report.lines.push(format!("refined {refined} image(s), skipped {}", skipped.len()));
    for (o, n) in &totals {
        report.lines.push(format!("  {o:<9} {n}"));
    }
    report.lines.push(format!("  {:<9} {total}", "total"));
    Ok(report)
}

fn refine_record(record: &Record, args: &RefineArgs, cfg: &RunConfig) -> std::result::Result<ImageResult, String> {
    let mask_path = record.mask_path.as_deref().expect("seg records carry a mask path");
    let mask = read_mask(mask_path, cfg.num_classes).map_err(|e| e.to_string())?;
    let pred_path = args.predictions.join(format!("{}.json", record.image_id));
    let mut warning = None;
    let predictions = if pred_path.exists() {
        let doc = BoxesDocument::read(&pred_path).map_err(|e| e.to_string())?;
        let image = find_image(&doc, &record.image_id, &pred_path)?;
        if (image.width, image.height) != (mask.width(), mask.height()) {
            return Err(format!(
                "predictions are for a {}x{} image but the mask is {}x{}",
                image.width,
                image.height,
                mask.width(),
                mask.height()
            ));
        }
        image.scored(cfg.num_classes).map_err(|m| format!("{}: {m}", pred_path.display()))?
    } else if args.allow_missing {
        warning = Some(format!("{}: no predictions file, emitting mask boxes only", record.image_id));
        Vec::new()
    } else {
        return Err(format!("missing predictions file {}", pred_path.display()));
    };

    let boxes = refine_from_mask(&mask, &predictions, &cfg.refine).map_err(|e| e.to_string())?;
    let mut counts = BTreeMap::new();
    for b in &boxes {
        *counts.entry(b.origin).or_insert(0) += 1;
    }
    let doc = BoxesDocument {
        images: vec![ImageRecord {
            id: record.image_id.clone(),
            width: mask.width(),
            height: mask.height(),
            boxes: boxes.iter().map(BoxRecord::refined).collect(),
        }],
    };
    let out = args.out.join("refined").join(format!("{}.json", record.image_id));
    doc.write(&out).map_err(|e| e.to_string())?;
    Ok(ImageResult { counts, warning })
}

/// The document entry for `id`.
pub(crate) fn find_image<'a>(doc: &'a BoxesDocument, id: &str, path: &Path) -> std::result::Result<&'a ImageRecord, String> {
    doc.image(id).ok_or_else(|| format!("{} has no image with id {id:?}", path.display()))
}
