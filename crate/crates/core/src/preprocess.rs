//! ROI crop, bilinear resize and tensor serialization ahead of inference.

use crate::classify::{Layout, ModelSpec, Normalization};
use crate::error::{Error, Result};
use crate::image::{Frame, GrayFrame};
use crate::roi::Roi;

/// Model input tensor, always stored height × width × channel (channel-last).
#[derive(Clone, Debug, PartialEq)]
pub struct InputTensor {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl InputTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parse(format!("tensor dimensions must be positive, got {width}x{height}")));
        }
        let expected = width * height * Self::CHANNELS;
        if values.len() != expected {
            return Err(Error::TruncatedStream { expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("tensor contains non-finite values".into()));
        }
        Ok(InputTensor { height, width, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Values in the requested memory layout.
    pub fn values_in(&self, layout: Layout) -> Vec<f32> {
        match layout {
            Layout::ChannelLast => self.values.clone(),
            Layout::ChannelFirst => {
                let plane = self.width * self.height;
                let mut out = vec![0.0; self.values.len()];
                for (i, px) in self.values.chunks_exact(Self::CHANNELS).enumerate() {
                    for (c, &v) in px.iter().enumerate() {
                        out[c * plane + i] = v;
                    }
                }
                out
            }
        }
    }
}

/// Copies the ROI rectangle out of `frame`, one source row at a time.
pub fn crop(frame: &Frame, roi: &Roi) -> Result<Frame> {
    if roi.is_empty() || roi.w == 0 || roi.h == 0 {
        return Err(Error::EmptyRoi);
    }
    if roi.right() > frame.width() || roi.bottom() > frame.height() {
        return Err(Error::OutOfBounds {
            x: roi.x,
            y: roi.y,
            w: roi.w,
            h: roi.h,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    let mut data = Vec::with_capacity(roi.w * roi.h * 3);
    for y in roi.y..roi.bottom() {
        data.extend_from_slice(&frame.row(y)[roi.x * 3..roi.right() * 3]);
    }
    Frame::new(roi.w, roi.h, data)
}

/// Bilinear resize with half-pixel centers and clamped sample coordinates.
///
/// Panics if either output dimension is zero.
pub fn resize_bilinear(frame: &Frame, out_w: usize, out_h: usize) -> Frame {
    assert!(out_w >= 1 && out_h >= 1, "resize target must be at least 1x1");
    if (out_w, out_h) == (frame.width(), frame.height()) {
        return frame.clone();
    }
    let data = resize_plane(frame.data(), frame.width(), frame.height(), 3, out_w, out_h);
    Frame::new(out_w, out_h, data).expect("resize produced consistent buffer")
}

pub fn resize_bilinear_gray(img: &GrayFrame, out_w: usize, out_h: usize) -> GrayFrame {
    assert!(out_w >= 1 && out_h >= 1, "resize target must be at least 1x1");
    if (out_w, out_h) == (img.width(), img.height()) {
        return img.clone();
    }
    let data = resize_plane(img.data(), img.width(), img.height(), 1, out_w, out_h);
    GrayFrame::from_raw(out_w, out_h, data)
}

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            Tap { lo, hi: (lo + 1).min(src_len - 1), frac: s - lo as f64 }
        })
        .collect()
}

fn resize_plane(src: &[u8], w: usize, h: usize, channels: usize, out_w: usize, out_h: usize) -> Vec<u8> {
    let xs = taps(w, out_w);
    let ys = taps(h, out_h);
    let stride = w * channels;
    let mut out = Vec::with_capacity(out_w * out_h * channels);
    for ty in &ys {
        let row0 = &src[ty.lo * stride..(ty.lo + 1) * stride];
        let row1 = &src[ty.hi * stride..(ty.hi + 1) * stride];
        for tx in &xs {
            for c in 0..channels {
                let p00 = row0[tx.lo * channels + c] as f64;
                let p01 = row0[tx.hi * channels + c] as f64;
                let p10 = row1[tx.lo * channels + c] as f64;
                let p11 = row1[tx.hi * channels + c] as f64;
                let top = p00 + (p01 - p00) * tx.frac;
                let bottom = p10 + (p11 - p10) * tx.frac;
                let v = top + (bottom - top) * ty.frac;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Scales to `[0, 1]` and normalizes each channel with the spec's mean/std.
pub fn serialize(frame: &Frame, spec: &ModelSpec) -> Result<InputTensor> {
    if (frame.width(), frame.height()) != (spec.input_width, spec.input_height) {
        return Err(Error::DimensionMismatch {
            expected_w: spec.input_width,
            expected_h: spec.input_height,
            got_w: frame.width(),
            got_h: frame.height(),
        });
    }
    Ok(normalize(frame, &spec.normalization))
}

/// Normalization without the input-size check.
pub fn normalize(frame: &Frame, norm: &Normalization) -> InputTensor {
    let scale: [f32; 3] = std::array::from_fn(|c| 1.0 / (255.0 * norm.std[c]));
    let offset: [f32; 3] = std::array::from_fn(|c| norm.mean[c] / norm.std[c]);
    let values = frame
        .data()
        .chunks_exact(3)
        .flat_map(|p| std::array::from_fn::<f32, 3, _>(|c| p[c] as f32 * scale[c] - offset[c]))
        .collect();
    InputTensor { height: frame.height(), width: frame.width(), values }
}

/// Inverse of [`normalize`], rounding back to 8-bit.
pub fn denormalize(tensor: &InputTensor, norm: &Normalization) -> Frame {
    let data = tensor
        .values()
        .chunks_exact(3)
        .flat_map(|px| {
            std::array::from_fn::<u8, 3, _>(|c| {
                let v = (px[c] * norm.std[c] + norm.mean[c]) * 255.0;
                v.round().clamp(0.0, 255.0) as u8
            })
        })
        .collect();
    Frame::new(tensor.width(), tensor.height(), data).expect("tensor dimensions are valid")
}
