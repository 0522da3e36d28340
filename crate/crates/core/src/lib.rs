//! Fast-moving-object detection: frame differencing and morphology locate
//! motion, and only the moving region is cropped and classified.

pub mod annotate;
pub mod classify;
pub mod error;
pub mod frame_io;
pub mod image;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod preprocess;
pub mod roi;
pub mod synth;

pub use classify::{ClassScore, Classifier, ModelSpec, ReferenceClassifier};
pub use error::{Error, Result};
pub use frame_io::{open_source, FrameSink, FrameSource};
pub use image::{BinaryMask, Frame, GrayFrame};
pub use metrics::{Journal, MetricsReport, PowerSource, RunSummary};
pub use pipeline::{run, FrameResult, PipelineConfig, RunOutput};
pub use roi::Roi;
