//! Naive reference implementations. Deliberately slow and direct: every
//! kernel here is a plain loop over the definition, sharing no code with
//! the library.
#![allow(dead_code)]

use fmod_core::{BinaryMask, Frame, GrayFrame, Roi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gray(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayFrame {
    let data = (0..w * h).map(|_| rng.gen()).collect();
    GrayFrame::new(w, h, data).unwrap()
}

pub fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Frame {
    let data = (0..w * h * 3).map(|_| rng.gen()).collect();
    Frame::new(w, h, data).unwrap()
}

/// Random mask with a density drawn per mask, so sparse and dense cases both occur.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let p: f64 = rng.gen();
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p))
}

pub fn gray_px(rgb: [u8; 3]) -> u8 {
    let n = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
    (n as f64 / 1000.0).round() as u8
}

pub fn to_gray(f: &Frame) -> GrayFrame {
    GrayFrame::from_fn(f.width(), f.height(), |x, y| gray_px(f.pixel(x, y)))
}

pub fn abs_diff(a: &GrayFrame, b: &GrayFrame) -> GrayFrame {
    GrayFrame::from_fn(a.width(), a.height(), |x, y| {
        (a.get(x, y) as i32 - b.get(x, y) as i32).unsigned_abs() as u8
    })
}

fn clamped(img: &GrayFrame, x: isize, y: isize) -> u8 {
    let cx = x.clamp(0, img.width() as isize - 1) as usize;
    let cy = y.clamp(0, img.height() as isize - 1) as usize;
    img.get(cx, cy)
}

fn neighborhood(img: &GrayFrame, x: usize, y: usize, k: usize) -> Vec<u8> {
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            out.push(clamped(img, x as isize + dx, y as isize + dy));
        }
    }
    out
}

pub fn erode(img: &GrayFrame, k: usize) -> GrayFrame {
    GrayFrame::from_fn(img.width(), img.height(), |x, y| *neighborhood(img, x, y, k).iter().min().unwrap())
}

pub fn dilate(img: &GrayFrame, k: usize) -> GrayFrame {
    GrayFrame::from_fn(img.width(), img.height(), |x, y| *neighborhood(img, x, y, k).iter().max().unwrap())
}

pub fn open(img: &GrayFrame, k: usize) -> GrayFrame {
    dilate(&erode(img, k), k)
}

pub fn blur(img: &GrayFrame, k: usize) -> GrayFrame {
    GrayFrame::from_fn(img.width(), img.height(), |x, y| {
        let sum: u32 = neighborhood(img, x, y, k).iter().map(|&v| v as u32).sum();
        (sum as f64 / (k * k) as f64).round() as u8
    })
}

pub fn threshold(img: &GrayFrame, t: u8) -> Vec<u8> {
    img.data().iter().map(|&v| if v < t { 0 } else { 255 }).collect()
}

/// Min/max of set coordinates over a full scan.
pub fn brute_roi(mask: &BinaryMask) -> Roi {
    let (mut x0, mut y0, mut x1, mut y1, mut n) = (usize::MAX, usize::MAX, 0, 0, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.data()[y * mask.width() + x] == 255 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Roi::default();
    }
    Roi { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1, point_count: n }
}

/// Evaluates the bilinear formula at one output site, unrounded.
pub fn bilinear_at(src: &Frame, out_w: usize, out_h: usize, x: usize, y: usize, c: usize) -> f64 {
    let coord = |d: usize, dst: usize, len: usize| {
        let s = (d as f64 + 0.5) * (len as f64 / dst as f64) - 0.5;
        s.max(0.0).min((len - 1) as f64)
    };
    let sx = coord(x, out_w, src.width());
    let sy = coord(y, out_h, src.height());
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(src.width() - 1), (y0 + 1).min(src.height() - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let p = |xx: usize, yy: usize| src.pixel(xx, yy)[c] as f64;
    (1.0 - fx) * (1.0 - fy) * p(x0, y0) + fx * (1.0 - fy) * p(x1, y0) + (1.0 - fx) * fy * p(x0, y1) + fx * fy * p(x1, y1)
}

/// Trapezoid sum written out per interval, last sample held to `t_end`.
pub fn energy_j(samples: &[(f64, f64)], t_end_ms: f64) -> f64 {
    let mut mj = 0.0;
    for pair in samples.windows(2) {
        let ((t0, p0), (t1, p1)) = (pair[0], pair[1]);
        mj += (t1 - t0) * (p0 + p1) / 2.0;
    }
    let (tl, pl) = samples[samples.len() - 1];
    mj += (t_end_ms - tl) * pl;
    mj / 1000.0
}
