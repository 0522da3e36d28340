//! Bounding-box extraction from a motion mask and the movement gate.

use serde::{Deserialize, Serialize};

use crate::image::BinaryMask;

/// Tight bounding rectangle of all set pixels in a mask.
///
/// An empty mask yields the all-zero rectangle with `point_count == 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub point_count: usize,
}

impl Roi {
    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// Intersection over union of the two rectangles (point counts ignored).
    pub fn iou(&self, other: &Roi) -> f64 {
        let ix = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let iy = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        let inter = (ix * iy) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Scans the mask once, tracking the column and row extremes of set pixels.
pub fn find_roi(mask: &BinaryMask) -> Roi {
    let w = mask.width();
    let (mut x_min, mut x_max) = (usize::MAX, 0);
    let (mut y_min, mut y_max) = (usize::MAX, 0);
    let mut count = 0usize;

    for (y, row) in mask.data().chunks_exact(w).enumerate() {
        let Some(first) = row.iter().position(|&v| v == BinaryMask::ON) else {
            continue;
        };
        // Safe: a row with a first set pixel also has a last one.
        let last = row.iter().rposition(|&v| v == BinaryMask::ON).unwrap_or(first);
        count += row[first..=last].iter().filter(|&&v| v == BinaryMask::ON).count();
        x_min = x_min.min(first);
        x_max = x_max.max(last);
        if y_min == usize::MAX {
            y_min = y;
        }
        y_max = y;
    }

    if count == 0 {
        return Roi::default();
    }
    Roi {
        x: x_min,
        y: y_min,
        w: x_max - x_min + 1,
        h: y_max - y_min + 1,
        point_count: count,
    }
}

/// True when the mask had at least `min_area` set pixels.
pub fn movement_detected(roi: &Roi, min_area: usize) -> bool {
    roi.point_count >= min_area
}
