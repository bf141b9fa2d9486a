//! Qualitative overlays: masks blended at 50%, boxes outlined 2 px thick in
//! the color of their origin.

use crosstask::geometry::{BBox, BACKGROUND, IGNORE};
use crosstask::mask::SemanticMask;
use crosstask::refine::Origin;
use image::{Rgb, RgbImage};

use crate::formats::BoxRecord;

pub const OUTLINE_WIDTH: usize = 2;
pub const UNTAGGED_COLOR: [u8; 3] = [255, 255, 255];

pub fn origin_color(origin: Option<Origin>) -> [u8; 3] {
    match origin {
        Some(Origin::Add) => [0xFF, 0x00, 0xFF],
        Some(Origin::Merge) => [0xFF, 0xFF, 0x00],
        Some(Origin::Split) => [0x00, 0xFF, 0xFF],
        Some(Origin::Leftover) => [0x00, 0xFF, 0x00],
        None => UNTAGGED_COLOR,
    }
}

/// PASCAL VOC label colormap.
pub fn category_color(category: u8) -> [u8; 3] {
    let mut c = category;
    let mut rgb = [0u8; 3];
    for shift in (0..8).rev() {
        for (ch, v) in rgb.iter_mut().enumerate() {
            *v |= ((c >> ch) & 1) << shift;
        }
        c >>= 3;
    }
    rgb
}

/// Blend every object pixel halfway towards its category color.
pub fn blend_mask(img: &mut RgbImage, mask: &SemanticMask) {
    for (x, y, px) in img.enumerate_pixels_mut() {
        let label = mask.get(x as usize, y as usize);
        if label == BACKGROUND || label == IGNORE {
            continue;
        }
        let color = category_color(label);
        for (v, c) in px.0.iter_mut().zip(color) {
            *v = (*v as u16 + c as u16).div_ceil(2) as u8;
        }
    }
}

/// Paint the outermost `OUTLINE_WIDTH` pixel rings of the box's pixel span.
pub fn draw_outline(img: &mut RgbImage, bbox: &BBox, color: [u8; 3]) {
    let Some(span) = bbox.pixel_span(img.width() as usize, img.height() as usize) else {
        return;
    };
    for y in span.y0..span.y1 {
        for x in span.x0..span.x1 {
            let edge = x < span.x0 + OUTLINE_WIDTH
                || x + OUTLINE_WIDTH >= span.x1
                || y < span.y0 + OUTLINE_WIDTH
                || y + OUTLINE_WIDTH >= span.y1;
            if edge {
                img.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }
}

pub fn render(image: &RgbImage, boxes: &[BoxRecord], mask: Option<&SemanticMask>) -> Result<RgbImage, String> {
    let mut out = image.clone();
    if let Some(m) = mask {
        if (m.width(), m.height()) != (image.width() as usize, image.height() as usize) {
            return Err(format!(
                "mask is {}x{} but the image is {}x{}",
                m.width(),
                m.height(),
                image.width(),
                image.height()
            ));
        }
        blend_mask(&mut out, m);
    }
    for b in boxes {
        draw_outline(&mut out, &b.bbox, origin_color(b.origin));
    }
    Ok(out)
}
