//! Diagnostic frame rendering: predicted mask tint and contour, the warped
//! template outline, and a state banner with the score, burned into PNGs.

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::geometry::{Homography, Point2, Rect};
use crate::mask::{BinaryMask, Label, LabelImage};
use crate::tracker::{FrameRecord, TrackerMode};

/// Overlay colors; `tint_alpha` blends the object fill.
#[derive(Debug, Clone, Copy)]
pub struct OverlayStyle {
    pub obverse_tint: Rgb<u8>,
    pub reverse_tint: Rgb<u8>,
    pub tint_alpha: f32,
    pub contour: Rgb<u8>,
    pub template_outline: Rgb<u8>,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            obverse_tint: Rgb([60, 180, 60]),
            reverse_tint: Rgb([60, 90, 220]),
            tint_alpha: 0.45,
            contour: Rgb([255, 240, 40]),
            template_outline: Rgb([240, 60, 220]),
        }
    }
}

/// Alpha blend of one channel, the exact arithmetic the probe tests use.
pub fn blend_channel(base: u8, tint: u8, alpha: f32) -> u8 {
    ((1.0 - alpha) * base as f32 + alpha * tint as f32).round() as u8
}

/// Renders one frame's overlay.
pub fn render_overlay(
    frame: &RgbImage,
    mask: &LabelImage,
    record: &FrameRecord,
    template_bbox: Option<&Rect>,
    style: &OverlayStyle,
) -> Result<RgbImage> {
    let mut out = frame.clone();
    let (w, h) = (frame.width() as usize, frame.height() as usize);

    // Object fill tint.
    for y in 0..h.min(mask.height()) {
        for x in 0..w.min(mask.width()) {
            let label = mask.get(x, y);
            let tint = match label {
                Label::Obverse => style.obverse_tint,
                Label::Reverse => style.reverse_tint,
                Label::Background => continue,
            };
            let px = out.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                px.0[c] = blend_channel(px.0[c], tint.0[c], style.tint_alpha);
            }
        }
    }

    // Mask contour: object pixels with a background 4-neighbor.
    let object = mask.object_mask();
    draw_contour(&mut out, &object, style.contour);

    // Warped template outline.
    if let (Some(bbox), Some(hm)) = (template_bbox, record.homography) {
        if let Ok(hh) = Homography::from_matrix(hm) {
            let corners = bbox.corners();
            for i in 0..4 {
                let a = hh.warp_point(corners[i]);
                let b = hh.warp_point(corners[(i + 1) % 4]);
                if let (Ok(a), Ok(b)) = (a, b) {
                    draw_line(&mut out, a, b, style.template_outline);
                }
            }
        }
    }

    // State banner: colored strip plus score text.
    let banner_color = match record.mode {
        TrackerMode::Tracking => Rgb([30, 140, 30]),
        TrackerMode::Lost => Rgb([160, 30, 30]),
    };
    let banner_h = 12u32.min(frame.height());
    for y in 0..banner_h {
        for x in 0..frame.width() {
            out.put_pixel(x, y, banner_color);
        }
    }
    let text = format!(
        "{} {} S={:.2}",
        match record.mode {
            TrackerMode::Tracking => "TRACKING",
            TrackerMode::Lost => "LOST",
        },
        record.side.to_string().to_uppercase(),
        record.score.total
    );
    draw_text(&mut out, 2, 2, &text, Rgb([255, 255, 255]));
    Ok(out)
}

fn draw_contour(img: &mut RgbImage, mask: &BinaryMask, color: Rgb<u8>) {
    let (w, h) = mask.dims();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = (x == 0 || !mask.get(x - 1, y))
                || (x + 1 >= w || !mask.get(x + 1, y))
                || (y == 0 || !mask.get(x, y - 1))
                || (y + 1 >= h || !mask.get(x, y + 1));
            if edge && x < img.width() as usize && y < img.height() as usize {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, a: Point2, b: Point2, color: Rgb<u8>) {
    let steps = a.dist(&b).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = a.x + t * (b.x - a.x);
        let y = a.y + t * (b.y - a.y);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// 5x7 bitmap glyphs for the banner character set.
fn glyph(c: char) -> Option<[u8; 7]> {
    // Each byte is one row, low 5 bits used, MSB-left.
    let g = match c {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0E],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        '0' => [0x0E, 0x13, 0x15, 0x15, 0x15, 0x19, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F],
        '3' => [0x0E, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x0E, 0x10, 0x1E, 0x11, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x01, 0x0E],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        ' ' => [0x00; 7],
        _ => return None,
    };
    Some(g)
}

fn draw_text(img: &mut RgbImage, x0: u32, y0: u32, text: &str, color: Rgb<u8>) {
    let mut cx = x0;
    for ch in text.chars() {
        if let Some(rows) = glyph(ch) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..5u32 {
                    if row & (0x10 >> rx) != 0 {
                        let px = cx + rx;
                        let py = y0 + ry as u32;
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
        cx += 6;
    }
}
