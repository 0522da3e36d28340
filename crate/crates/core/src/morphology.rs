//! Raster kernels for movement detection: grayscale conversion, absolute
//! frame difference, flat square erosion/dilation/opening, box blur and
//! binary thresholding.
//!
//! Every neighborhood operation replicates edge pixels for out-of-bounds
//! neighbors. Square windows are separable under that border policy, so
//! erosion, dilation and blur run as a horizontal pass followed by a vertical
//! pass and produce exactly what a direct k×k scan would.

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Frame, GrayFrame};

/// Flat k×k square structuring element anchored at its center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    size: usize,
}

impl StructuringElement {
    pub fn square(size: usize) -> Result<Self> {
        check_odd(size)?;
        Ok(StructuringElement { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        StructuringElement { size: 3 }
    }
}

fn check_odd(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidKernel(k));
    }
    Ok(())
}

/// Luma with weights 0.299/0.587/0.114, rounded half up.
pub fn to_gray(frame: &Frame) -> GrayFrame {
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect();
    GrayFrame::from_raw(frame.width(), frame.height(), data)
}

pub fn frame_difference(a: &GrayFrame, b: &GrayFrame) -> Result<GrayFrame> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected_w: a.width(),
            expected_h: a.height(),
            got_w: b.width(),
            got_h: b.height(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x.abs_diff(y)).collect();
    Ok(GrayFrame::from_raw(a.width(), a.height(), data))
}

pub fn erode(img: &GrayFrame, se: StructuringElement) -> GrayFrame {
    rank_filter(img, se.size(), u8::min)
}

pub fn dilate(img: &GrayFrame, se: StructuringElement) -> GrayFrame {
    rank_filter(img, se.size(), u8::max)
}

/// Erosion followed by dilation with the same element.
pub fn open(img: &GrayFrame, se: StructuringElement) -> GrayFrame {
    dilate(&erode(img, se), se)
}

/// Normalized k×k box filter, rounded to nearest.
pub fn blur(img: &GrayFrame, ksize: usize) -> Result<GrayFrame> {
    check_odd(ksize)?;
    if ksize == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let r = ksize / 2;
    let area = (ksize * ksize) as u32;
    let divisor = rounding_divisor(area, 255 * area);

    let mut out = vec![0u8; w * h];
    // Column sums of the k rows around y, edge-padded by r on both sides.
    let mut cols = vec![0u32; w + 2 * r];
    let mut acc = vec![0u32; w];
    for y in 0..h {
        let inner = &mut cols[r..r + w];
        inner.fill(0);
        for j in 0..ksize {
            let row = clamp_row(y, j, r, h);
            for (c, &v) in inner.iter_mut().zip(&img.data()[row * w..(row + 1) * w]) {
                *c += v as u32;
            }
        }
        let (first, last) = (cols[r], cols[r + w - 1]);
        cols[..r].fill(first);
        cols[r + w..].fill(last);
        acc.copy_from_slice(&cols[..w]);
        for j in 1..ksize {
            for (a, &c) in acc.iter_mut().zip(&cols[j..j + w]) {
                *a += c;
            }
        }
        let dst = &mut out[y * w..(y + 1) * w];
        match divisor {
            Some((m, shift)) => {
                dst.iter_mut().zip(&acc).for_each(|(d, &s)| *d = (((s + area / 2) * m) >> shift) as u8)
            }
            None => dst.iter_mut().zip(&acc).for_each(|(d, &s)| *d = ((s + area / 2) / area) as u8),
        }
    }
    Ok(GrayFrame::from_raw(w, h, out))
}

/// Multiplier and shift with `x * m >> shift == x / area` for every
/// `x <= max_sum + area / 2`, checked exhaustively.
fn rounding_divisor(area: u32, max_sum: u32) -> Option<(u32, u32)> {
    let top = max_sum + area / 2;
    if top > 1 << 16 {
        return None;
    }
    (0..32).find_map(|shift| {
        let m = (1u64 << shift).div_ceil(area as u64);
        if m * top as u64 > u32::MAX as u64 {
            return None;
        }
        let m = m as u32;
        (0..=top).all(|x| (x * m) >> shift == x / area).then_some((m, shift))
    })
}

/// Pixels below `t` become 0, all others 255.
pub fn threshold(img: &GrayFrame, t: u8) -> BinaryMask {
    let data = img
        .data()
        .iter()
        .map(|&v| if v < t { BinaryMask::OFF } else { BinaryMask::ON })
        .collect();
    BinaryMask::from_raw(img.width(), img.height(), data)
}

fn rank_filter(img: &GrayFrame, k: usize, pick: impl Fn(u8, u8) -> u8 + Copy) -> GrayFrame {
    if k == 1 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = k / 2;

    let mut horiz = vec![0u8; w * h];
    let mut padded = vec![0u8; w + 2 * r];
    for y in 0..h {
        pad_row(&img.data()[y * w..(y + 1) * w], r, &mut padded);
        let out = &mut horiz[y * w..(y + 1) * w];
        out.copy_from_slice(&padded[..w]);
        for j in 1..k {
            for (o, &v) in out.iter_mut().zip(&padded[j..j + w]) {
                *o = pick(*o, v);
            }
        }
    }

    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        dst.copy_from_slice(&horiz[clamp_row(y, 0, r, h) * w..][..w]);
        for j in 1..k {
            let row = clamp_row(y, j, r, h);
            for (o, &v) in dst.iter_mut().zip(&horiz[row * w..(row + 1) * w]) {
                *o = pick(*o, v);
            }
        }
    }
    GrayFrame::from_raw(w, h, out)
}

/// Copies `src` into `dst` with `r` replicated edge pixels on each side.
fn pad_row(src: &[u8], r: usize, dst: &mut [u8]) {
    let w = src.len();
    dst[..r].fill(src[0]);
    dst[r..r + w].copy_from_slice(src);
    dst[r + w..].fill(src[w - 1]);
}

/// Row index of window tap `j` for output row `y`, clamped into `0..h`.
#[inline]
fn clamp_row(y: usize, j: usize, r: usize, h: usize) -> usize {
    (y + j).saturating_sub(r).min(h - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se3() -> StructuringElement {
        StructuringElement::square(3).unwrap()
    }

    fn spike(w: usize, h: usize, x: usize, y: usize, v: u8) -> GrayFrame {
        GrayFrame::from_fn(w, h, |cx, cy| if (cx, cy) == (x, y) { v } else { 0 })
    }

    #[test]
    fn gray_of_primary_colors() {
        let f = Frame::new(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(to_gray(&f).data(), &[255, 0, 76]);
    }

    #[test]
    fn difference_is_absolute() {
        let a = GrayFrame::new(2, 1, vec![200, 50]).unwrap();
        let b = GrayFrame::new(2, 1, vec![50, 200]).unwrap();
        assert_eq!(frame_difference(&a, &b).unwrap().data(), &[150, 150]);
        assert!(frame_difference(&a, &a).unwrap().data().iter().all(|&v| v == 0));
        let c = GrayFrame::filled(1, 2, 0);
        assert!(matches!(frame_difference(&a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn structuring_element_must_be_odd() {
        assert!(StructuringElement::square(0).is_err());
        assert!(StructuringElement::square(4).is_err());
        assert_eq!(StructuringElement::default().size(), 3);
    }

    #[test]
    fn erode_removes_spike_and_dilate_spreads_it() {
        let img = spike(7, 7, 3, 3, 255);
        assert!(erode(&img, se3()).data().iter().all(|&v| v == 0));
        let d = dilate(&img, se3());
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&x) && (2..=4).contains(&y);
                assert_eq!(d.get(x, y), if inside { 255 } else { 0 }, "({x},{y})");
            }
        }
    }

    #[test]
    fn constant_images_are_fixed_points() {
        let img = GrayFrame::filled(9, 5, 77);
        assert_eq!(erode(&img, se3()), img);
        assert_eq!(dilate(&img, se3()), img);
        assert_eq!(blur(&img, 5).unwrap(), img);
    }

    #[test]
    fn opening_removes_speck_keeps_block() {
        let mut img = spike(12, 12, 1, 1, 200);
        for y in 5..10 {
            for x in 5..10 {
                img.set(x, y, 180);
            }
        }
        let o = open(&img, se3());
        assert_eq!(o.get(1, 1), 0);
        for y in 5..10 {
            for x in 5..10 {
                assert_eq!(o.get(x, y), 180);
            }
        }
    }

    #[test]
    fn blur_center_spike() {
        let img = spike(3, 3, 1, 1, 90);
        assert_eq!(blur(&img, 3).unwrap().get(1, 1), 10);
        assert_eq!(blur(&img, 1).unwrap(), img);
        assert!(matches!(blur(&img, 2), Err(Error::InvalidKernel(2))));
        assert!(matches!(blur(&img, 0), Err(Error::InvalidKernel(0))));
    }

    #[test]
    fn blur_wider_than_image_replicates_edges() {
        // 1x1 image, 5x5 kernel: every tap is the single pixel.
        let img = GrayFrame::filled(1, 1, 123);
        assert_eq!(blur(&img, 5).unwrap().get(0, 0), 123);
        assert_eq!(erode(&img, StructuringElement::square(7).unwrap()).get(0, 0), 123);
    }

    #[test]
    fn threshold_boundary_goes_high() {
        let img = GrayFrame::new(3, 1, vec![100, 127, 128]).unwrap();
        assert_eq!(threshold(&img, 127).data(), &[0, 255, 255]);
        assert_eq!(threshold(&GrayFrame::filled(4, 4, 0), 1).count(), 0);
    }
}
