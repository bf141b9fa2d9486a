use std::path::PathBuf;

use crosstask::pseudo::make_pseudo_pair;
use crosstask::segmenter::{BoxFillSegmenter, CoarseSegmenter, SegmenterRegistry};
use image::RgbImage;
use rayon::prelude::*;

use super::refine::find_image;
use super::{image_seed, CommandReport};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::mask::encode_mask;
use crate::formats::BoxesDocument;
use crate::io::{read_rgb, write_atomic};
use crate::manifest::{DatasetManifest, Record, TaskTag};
use crate::pool;

#[derive(Debug, Clone)]
pub struct PseudomaskArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
}

/// Box-filled and coarse masks for every detection-annotated image, written
/// to `<out>/box_masks/<id>.png` and `<out>/coarse_masks/<id>.png`.
pub fn cmd_pseudomask(args: &PseudomaskArgs, cfg: &RunConfig) -> Result<CommandReport> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let segmenter = SegmenterRegistry::with_builtins()
        .create(&cfg.segmenter, &cfg.segmenter_options())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let records: Vec<&Record> = manifest.tagged(TaskTag::Det).collect();
    let results: Vec<std::result::Result<Vec<String>, String>> = pool::run(|| {
        records
            .par_iter()
            .map(|r| pseudomask_record(r, args, cfg, segmenter.as_ref()))
            .collect()
    })?;

    let mut report = CommandReport::default();
    let mut written = 0usize;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(warnings) => {
                written += 1;
                report.warnings.extend(warnings.into_iter().map(|w| format!("{}: {w}", record.image_id)));
            }
            Err(message) => {
                report.partial = true;
                report.warnings.push(format!("{}: skipped: {message}", record.image_id));
            }
        }
    }
    report.lines.push(format!(
        "wrote {written} mask pair(s) with segmenter {}, skipped {}",
        cfg.segmenter,
        records.len() - written
    ));
    Ok(report)
}

fn pseudomask_record(
    record: &Record,
    args: &PseudomaskArgs,
    cfg: &RunConfig,
    segmenter: &dyn CoarseSegmenter,
) -> std::result::Result<Vec<String>, String> {
    let boxes_path = record.boxes_path.as_deref().expect("det records carry a boxes path");
    let doc = BoxesDocument::read(boxes_path).map_err(|e| e.to_string())?;
    let entry = find_image(&doc, &record.image_id, boxes_path)?;
    for (i, b) in entry.boxes.iter().enumerate() {
        if b.category > cfg.num_classes {
            return Err(format!("box {i} has category {} > num_classes {}", b.category, cfg.num_classes));
        }
    }
    let boxes = entry.labeled();
    let (w, h) = (entry.width, entry.height);

    let mut warnings = Vec::new();
    let image = match &record.image_path {
        Some(p) => match read_rgb(p) {
            Ok(img) if (img.width() as usize, img.height() as usize) == (w, h) => Some(img),
            Ok(img) => {
                return Err(format!(
                    "image is {}x{} but the boxes document says {w}x{h}",
                    img.width(),
                    img.height()
                ))
            }
            Err(e) => {
                warnings.push(format!("cannot read image ({e})"));
                None
            }
        },
        None => None,
    };
    let (image, segmenter): (RgbImage, &dyn CoarseSegmenter) = match image {
        Some(img) => (img, segmenter),
        None => {
            if segmenter.name() != BoxFillSegmenter.name() {
                warnings.push(format!("no image, coarse mask falls back to box fill instead of {}", segmenter.name()));
            }
            (RgbImage::new(w as u32, h as u32), &BoxFillSegmenter)
        }
    };

    let (pair, seg_warnings) =
        make_pseudo_pair(&image, &boxes, segmenter, image_seed(cfg.seed, &record.image_id)).map_err(|e| e.to_string())?;
    warnings.extend(seg_warnings);
    pair.verify(&boxes).map_err(|e| format!("pseudo-mask check failed: {e}"))?;

    let name = format!("{}.png", record.image_id);
    write_atomic(&args.out.join("box_masks").join(&name), &encode_mask(&pair.box_mask)).map_err(|e| e.to_string())?;
    write_atomic(&args.out.join("coarse_masks").join(&name), &encode_mask(&pair.coarse_mask))
        .map_err(|e| e.to_string())?;
    Ok(warnings)
}
