//! The detection loop: difference consecutive frames, gate on motion, and
//! classify only the frames where something moved.
//!
//! Each iteration pairs the previous frame with the current one. The first
//! frame has no predecessor and yields no result, so an N-frame source
//! produces N−1 [`FrameResult`]s in frame order.

use std::sync::mpsc;
use std::time::Instant;

use crate::annotate::write_annotated;
use crate::classify::{top, ClassScore, Classifier, ModelSpec};
use crate::error::{Error, Result};
use crate::frame_io::{FrameSink, FrameSource};
use crate::image::{Frame, GrayFrame};
use crate::metrics::{
    ms_since, summarize, FrameRecord, Journal, PowerMonitor, PowerSource, RunSummary, Score, StageTimings,
};
use crate::morphology::{blur, frame_difference, open, threshold, to_gray, StructuringElement};
use crate::preprocess::{crop, resize_bilinear, serialize, InputTensor};
use crate::roi::{find_roi, movement_detected, Roi};
use crate::synth::GroundTruth;

/// IoU a detection needs against ground truth to count as correct.
pub const MIN_IOU: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub diff_threshold: u8,
    pub se_size: usize,
    pub blur_size: usize,
    pub min_area: usize,
    pub model: ModelSpec,
    /// Let classification of one pair overlap movement detection of the next.
    pub overlap: bool,
}

impl PipelineConfig {
    pub fn new(model: ModelSpec) -> Self {
        PipelineConfig { diff_threshold: 25, se_size: 3, blur_size: 5, min_area: 50, model, overlap: false }
    }

    pub fn validate(&self) -> Result<()> {
        StructuringElement::square(self.se_size)?;
        if self.blur_size == 0 || self.blur_size.is_multiple_of(2) {
            return Err(Error::InvalidKernel(self.blur_size));
        }
        if self.min_area == 0 {
            return Err(Error::InvalidSpec("min_area must be at least 1".into()));
        }
        Ok(())
    }

    pub fn detector(&self) -> Result<MovementDetector> {
        self.validate()?;
        Ok(MovementDetector {
            se: StructuringElement::square(self.se_size)?,
            blur_size: self.blur_size,
            diff_threshold: self.diff_threshold,
        })
    }
}

/// Difference, opening, blur, threshold and bounding box for one frame pair.
#[derive(Clone, Copy, Debug)]
pub struct MovementDetector {
    pub se: StructuringElement,
    pub blur_size: usize,
    pub diff_threshold: u8,
}

impl MovementDetector {
    pub fn detect(&self, prev: &GrayFrame, cur: &GrayFrame) -> Result<Roi> {
        let diff = frame_difference(prev, cur)?;
        let opened = open(&diff, self.se);
        let smooth = blur(&opened, self.blur_size)?;
        Ok(find_roi(&threshold(&smooth, self.diff_threshold)))
    }

    /// Grayscale conversion of both frames included.
    pub fn detect_frames(&self, prev: &Frame, cur: &Frame) -> Result<Roi> {
        self.detect(&to_gray(prev), &to_gray(cur))
    }

    /// Median time in ms of the per-frame movement stage on a `width`×`height`
    /// pair in which a square appears. As in [`run`], the previous frame's
    /// gray image is reused, so each timing covers one gray conversion.
    pub fn time_stage(&self, width: usize, height: usize, repeats: usize) -> Result<f64> {
        let prev = crate::synth::background(width, height);
        let mut cur = prev.clone();
        let side = (width.min(height) / 8).max(1);
        for y in height / 3..(height / 3 + side).min(height) {
            for x in width / 3..(width / 3 + side).min(width) {
                cur.set_pixel(x, y, crate::synth::OBJECT_COLOR);
            }
        }
        let prev = to_gray(&prev);
        let mut times = Vec::with_capacity(repeats.max(1));
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            std::hint::black_box(self.detect(&prev, &to_gray(&cur))?);
            times.push(ms_since(start));
        }
        times.sort_by(f64::total_cmp);
        Ok(times[times.len() / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub movement: bool,
    pub roi: Roi,
    pub label: Option<String>,
    pub scores: Option<Vec<ClassScore>>,
    pub timings: StageTimings,
}

impl FrameResult {
    pub fn record(&self) -> FrameRecord {
        FrameRecord {
            index: self.index,
            movement: self.movement,
            roi: self.roi,
            label: self.label.clone(),
            score: self.scores.as_deref().and_then(top).map(|s| s.score),
            timings: self.timings,
        }
    }
}

/// Crop the current frame at the ROI and turn it into a model tensor.
pub fn prepare_input(frame: &Frame, roi: &Roi, spec: &ModelSpec) -> Result<InputTensor> {
    let cropped = crop(frame, roi)?;
    let resized = resize_bilinear(&cropped, spec.input_width, spec.input_height);
    serialize(&resized, spec)
}

/// Output of the movement half of an iteration.
struct Detected {
    index: usize,
    frame: Frame,
    roi: Roi,
    tensor: Option<InputTensor>,
    timings: StageTimings,
    started: Instant,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub results: Vec<FrameResult>,
}

/// Counts a result correct when motion was detected, the label matches and
/// the ROI overlaps the true box with IoU ≥ [`MIN_IOU`]. Only frames where
/// the ground-truth object moved are scored.
pub fn score_results(results: &[FrameResult], truth: &GroundTruth) -> Score {
    let mut score = Score { correct: 0, total: 0 };
    for r in results.iter().filter(|r| truth.is_motion(r.index)) {
        score.total += 1;
        let Some(entry) = truth.at(r.index) else { continue };
        if r.movement && r.label.as_deref() == Some(entry.label.as_str()) && r.roi.iou(&entry.rect()) >= MIN_IOU {
            score.correct += 1;
        }
    }
    score
}

/// Runs the whole loop over `source`.
///
/// Frames are written to `sink` (the first unmodified, the rest annotated)
/// and every result is appended to `journal` as soon as it is final, so a
/// failure leaves the journal holding everything completed before it.
pub fn run(
    source: &mut FrameSource,
    config: &PipelineConfig,
    classifier: &mut dyn Classifier,
    mut sink: Option<&mut dyn FrameSink>,
    journal: &mut Journal,
    power: PowerSource,
    truth: Option<&GroundTruth>,
) -> Result<RunOutput> {
    let total_frames = source.frame_count();
    if total_frames < 2 {
        return Err(Error::SourceTooShort(total_frames));
    }
    let detector = config.detector()?;
    let monitor = PowerMonitor::start(power)?;

    let first = source.read_frame()?.ok_or(Error::SourceTooShort(0))?;
    if let Some(s) = sink.as_deref_mut() {
        s.write_frame(&first)?;
    }
    let mut prev_gray = to_gray(&first);
    drop(first);

    let mut results = Vec::with_capacity(total_frames - 1);
    let mut next_detection = |prev_gray: &mut GrayFrame| -> Result<Option<Detected>> {
        if source.next_index() >= total_frames {
            return Ok(None);
        }
        let index = source.next_index();
        let started = Instant::now();
        let Some(frame) = source.read_frame()? else { return Ok(None) };
        let mut timings = StageTimings { read_ms: ms_since(started), ..StageTimings::default() };

        let t = Instant::now();
        let gray = to_gray(&frame);
        let roi = detector.detect(prev_gray, &gray)?;
        let moved = movement_detected(&roi, config.min_area);
        timings.movement_ms = ms_since(t);
        *prev_gray = gray;

        let tensor = if moved {
            let t = Instant::now();
            let tensor = prepare_input(&frame, &roi, &config.model)?;
            timings.preprocess_ms = Some(ms_since(t));
            Some(tensor)
        } else {
            None
        };
        Ok(Some(Detected { index, frame, roi, tensor, timings, started }))
    };

    if config.overlap {
        let (tx, rx) = mpsc::sync_channel::<Detected>(2);
        let outcome: Result<()> = std::thread::scope(|scope| {
            let consumer = scope.spawn(|| -> Result<Vec<FrameResult>> {
                let mut out = Vec::new();
                for d in rx {
                    out.push(finish(d, classifier, sink.as_deref_mut(), &config.model, journal)?);
                }
                Ok(out)
            });
            let mut produced = Ok(());
            loop {
                match next_detection(&mut prev_gray) {
                    Ok(Some(d)) => {
                        if tx.send(d).is_err() {
                            break; // consumer failed; its error wins
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        produced = Err(e);
                        break;
                    }
                }
            }
            drop(tx);
            let consumed = consumer.join().expect("classification stage panicked");
            match consumed {
                Ok(out) => {
                    results = out;
                    produced
                }
                Err(e) => Err(e),
            }
        });
        outcome?;
    } else {
        while let Some(d) = next_detection(&mut prev_gray)? {
            results.push(finish(d, classifier, sink.as_deref_mut(), &config.model, journal)?);
        }
    }

    if let Some(s) = sink {
        s.finish()?;
    }
    let trace = monitor.stop()?;
    let score = truth.map(|t| score_results(&results, t));
    let timings: Vec<StageTimings> = results.iter().map(|r| r.timings).collect();
    let summary = summarize(&timings, &trace, score)?;
    Ok(RunOutput { summary, results })
}

fn finish(
    d: Detected,
    classifier: &mut dyn Classifier,
    sink: Option<&mut (dyn FrameSink + '_)>,
    spec: &ModelSpec,
    journal: &mut Journal,
) -> Result<FrameResult> {
    let Detected { index, frame, roi, tensor, mut timings, started } = d;
    let (label, scores) = match tensor {
        Some(tensor) => {
            let t = Instant::now();
            let scores = classifier.classify(&tensor, spec)?;
            timings.classify_ms = Some(ms_since(t));
            (top(&scores).map(|s| s.label.clone()), Some(scores))
        }
        None => (None, None),
    };
    let mut result = FrameResult { index, movement: scores.is_some(), roi, label, scores, timings };
    let t = Instant::now();
    if let Some(s) = sink {
        write_annotated(&frame, &result, s)?;
    }
    result.timings.annotate_ms = ms_since(t);
    result.timings.total_ms = ms_since(started);
    journal.push(result.record());
    Ok(result)
}
