use std::path::PathBuf;

use super::CommandReport;
use crate::config::DEFAULT_NUM_CLASSES;
use crate::error::{CliError, Result};
use crate::formats::{read_mask, BoxesDocument};
use crate::io::{encode_png_rgb, read_rgb, write_atomic};
use crate::render::render;

#[derive(Debug, Clone)]
pub struct OverlayArgs {
    pub image: PathBuf,
    pub boxes: Option<PathBuf>,
    /// Which document entry to draw; optional for single-image documents.
    pub image_id: Option<String>,
    pub mask: Option<PathBuf>,
    pub out: PathBuf,
    pub num_classes: Option<u8>,
}

pub fn cmd_overlay(args: &OverlayArgs) -> Result<CommandReport> {
    let image = read_rgb(&args.image)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut boxes = Vec::new();
    if let Some(path) = &args.boxes {
        let doc = BoxesDocument::read(path)?;
        let entry = match &args.image_id {
            Some(id) => doc.image(id).ok_or_else(|| CliError::data(path, format!("no image with id {id:?}")))?,
            None if doc.images.len() == 1 => &doc.images[0],
            None => {
                return Err(CliError::Usage(format!(
                    "{} holds {} images; choose one with --id",
                    path.display(),
                    doc.images.len()
                )))
            }
        };
        if (entry.width, entry.height) != (w, h) {
            return Err(CliError::data(
                path,
                format!("boxes are for a {}x{} image but the image is {w}x{h}", entry.width, entry.height),
            ));
        }
        boxes = entry.boxes.clone();
    }
    let mask = match &args.mask {
        Some(p) => Some(read_mask(p, args.num_classes.unwrap_or(DEFAULT_NUM_CLASSES))?),
        None => None,
    };
    let out = render(&image, &boxes, mask.as_ref()).map_err(|m| CliError::data(&args.image, m))?;
    write_atomic(&args.out, &encode_png_rgb(&out))?;
    Ok(CommandReport {
        lines: vec![format!("wrote {} ({} boxes)", args.out.display(), boxes.len())],
        ..Default::default()
    })
}
