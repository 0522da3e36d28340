//! Bounding-box and label overlay for detected motion.

use crate::error::Result;
use crate::frame_io::FrameSink;
use crate::image::Frame;
use crate::pipeline::FrameResult;
use crate::roi::Roi;

pub const BOX_COLOR: [u8; 3] = [0, 255, 0];
pub const BOX_THICKNESS: usize = 2;

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const ADVANCE: usize = GLYPH_W + 1;

/// Draws the ROI outline and label in place; pixels outside the frame are skipped.
pub fn draw_detection(frame: &mut Frame, roi: &Roi, label: Option<&str>) {
    if roi.is_empty() {
        return;
    }
    draw_rect_outline(frame, roi, BOX_THICKNESS, BOX_COLOR);
    if let Some(text) = label {
        // Above the box when there is room, otherwise just inside its top edge.
        let ty = if roi.y >= GLYPH_H + 2 {
            roi.y as isize - (GLYPH_H as isize + 2)
        } else {
            (roi.y + BOX_THICKNESS + 1) as isize
        };
        draw_text(frame, roi.x as isize, ty, text, BOX_COLOR);
    }
}

pub fn draw_rect_outline(frame: &mut Frame, roi: &Roi, thickness: usize, color: [u8; 3]) {
    let (fw, fh) = (frame.width(), frame.height());
    let x_end = roi.right().min(fw);
    let y_end = roi.bottom().min(fh);
    if roi.x >= x_end || roi.y >= y_end {
        return;
    }
    for y in roi.y..y_end {
        let near_h = y < roi.y + thickness || y + thickness >= roi.bottom();
        for x in roi.x..x_end {
            let near_v = x < roi.x + thickness || x + thickness >= roi.right();
            if near_h || near_v {
                frame.set_pixel(x, y, color);
            }
        }
    }
}

pub fn draw_text(frame: &mut Frame, x: isize, y: isize, text: &str, color: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        let gx = x + (i * ADVANCE) as isize;
        let rows = glyph(ch);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - dx)) == 0 {
                    continue;
                }
                let (px, py) = (gx + dx as isize, y + dy as isize);
                if px >= 0 && py >= 0 && (px as usize) < frame.width() && (py as usize) < frame.height() {
                    frame.set_pixel(px as usize, py as usize, color);
                }
            }
        }
    }
}

/// Annotates (or passes through) one frame and hands it to the sink.
pub fn write_annotated(frame: &Frame, result: &FrameResult, sink: &mut dyn FrameSink) -> Result<()> {
    if !result.movement {
        return sink.write_frame(frame);
    }
    let mut out = frame.clone();
    draw_detection(&mut out, &result.roi, result.label.as_deref());
    sink.write_frame(&out)
}

/// 5×7 bitmap rows, MSB leftmost. Lowercase renders as uppercase.
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c.to_ascii_uppercase() {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        ' ' => [0; GLYPH_H],
        '-' => [0, 0, 0, 0b11111, 0, 0, 0],
        '_' => [0, 0, 0, 0, 0, 0, 0b11111],
        '.' => [0, 0, 0, 0, 0, 0b01100, 0b01100],
        ':' => [0, 0b01100, 0b01100, 0, 0b01100, 0b01100, 0],
        '%' => [0b11000, 0b11001, 0b00010, 0b00100, 0b01000, 0b10011, 0b00011],
        _ => [0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111],
    }
}
