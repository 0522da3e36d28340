//! Python bindings for the fmod core: image kernels, ROI extraction,
//! preprocessing, model specs, synthetic clips and whole detection runs.

use std::path::PathBuf;

use fmod_core::classify::{fit_reference, load_training_set, ModelSpec, ReferenceClassifier};
use fmod_core::metrics::{self, Journal, MetricsReport, PowerSample, PowerSource};
use fmod_core::morphology::{self, StructuringElement};
use fmod_core::synth::{self, GroundTruth, Shape, SynthSpec};
use fmod_core::{classify, frame_io, pipeline, preprocess, roi, BinaryMask, Error, Frame, GrayFrame, PipelineConfig, Roi};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(fmod, FmodError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::NotFound(path) => PyFileNotFoundError::new_err(path.display().to_string()),
        Error::InvalidKernel(_) | Error::DimensionMismatch { .. } | Error::InvalidSpec(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => FmodError::new_err(other.to_string()),
    }
}

fn se(size: usize) -> PyResult<StructuringElement> {
    StructuringElement::square(size).map_err(err)
}

#[pyclass(name = "Frame", module = "fmod", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFrame(Frame);

#[pymethods]
impl PyFrame {
    /// Packed RGB frame; `data` holds `width * height * 3` bytes.
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        Frame::new(width, height, data.to_vec()).map(PyFrame).map_err(err)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        PyFrame(Frame::filled(width, height, rgb))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[u8; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel {x},{y} outside frame")));
        }
        Ok(self.0.pixel(x, y))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Frame({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(name = "GrayFrame", module = "fmod", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGray(GrayFrame);

#[pymethods]
impl PyGray {
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        GrayFrame::new(width, height, data.to_vec()).map(PyGray).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn get(&self, x: usize, y: usize) -> PyResult<u8> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel {x},{y} outside frame")));
        }
        Ok(self.0.get(x, y))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("GrayFrame({}x{})", self.0.width(), self.0.height())
    }
}

#[pyclass(name = "Mask", module = "fmod", frozen)]
struct PyMask(BinaryMask);

#[pymethods]
impl PyMask {
    /// Binary mask; any nonzero byte is a set pixel.
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        let bits = data.iter().map(|&v| u8::from(v != 0)).collect();
        BinaryMask::new(width, height, bits).map(PyMask).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, {} set)", self.0.width(), self.0.height(), self.0.count())
    }
}

#[pyclass(name = "Roi", module = "fmod", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyRoi(Roi);

#[pymethods]
impl PyRoi {
    #[new]
    #[pyo3(signature = (x, y, w, h, point_count = 0))]
    fn new(x: usize, y: usize, w: usize, h: usize, point_count: usize) -> Self {
        PyRoi(Roi { x, y, w, h, point_count })
    }

    #[getter]
    fn x(&self) -> usize {
        self.0.x
    }

    #[getter]
    fn y(&self) -> usize {
        self.0.y
    }

    #[getter]
    fn w(&self) -> usize {
        self.0.w
    }

    #[getter]
    fn h(&self) -> usize {
        self.0.h
    }

    #[getter]
    fn point_count(&self) -> usize {
        self.0.point_count
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn area(&self) -> usize {
        self.0.area()
    }

    fn iou(&self, other: &PyRoi) -> f64 {
        self.0.iou(&other.0)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        let r = self.0;
        format!("Roi(x={}, y={}, w={}, h={}, point_count={})", r.x, r.y, r.w, r.h, r.point_count)
    }
}

#[pyclass(name = "ModelSpec", module = "fmod", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpec(ModelSpec);

#[pymethods]
impl PySpec {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        classify::load_model_spec(path).map(PySpec).map_err(err)
    }

    #[staticmethod]
    fn shipped(name: &str) -> PyResult<Self> {
        classify::shipped_spec(name)
            .map(PySpec)
            .ok_or_else(|| PyValueError::new_err(format!("unknown model {name:?}")))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ModelSpec::from_json(text).map(PySpec).map_err(err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        (self.0.input_width, self.0.input_height)
    }

    #[getter]
    fn layout(&self) -> &'static str {
        self.0.layout.as_str()
    }

    #[getter]
    fn mean(&self) -> [f32; 3] {
        self.0.normalization.mean
    }

    #[getter]
    fn std(&self) -> [f32; 3] {
        self.0.normalization.std
    }

    #[getter]
    fn label_map(&self) -> std::collections::BTreeMap<String, String> {
        self.0.label_map.clone()
    }

    fn map_label(&self, label: &str) -> String {
        self.0.map_label(label).to_string()
    }

    fn __repr__(&self) -> String {
        format!("ModelSpec({:?}, {}x{})", self.0.name, self.0.input_width, self.0.input_height)
    }
}

#[pyfunction]
fn shipped_specs() -> Vec<PySpec> {
    classify::shipped_specs().into_iter().map(|(_, s)| PySpec(s)).collect()
}

#[pyfunction]
fn to_gray(frame: &PyFrame) -> PyGray {
    PyGray(morphology::to_gray(&frame.0))
}

#[pyfunction]
fn frame_difference(a: &PyGray, b: &PyGray) -> PyResult<PyGray> {
    morphology::frame_difference(&a.0, &b.0).map(PyGray).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (img, size = 3))]
fn erode(img: &PyGray, size: usize) -> PyResult<PyGray> {
    Ok(PyGray(morphology::erode(&img.0, se(size)?)))
}

#[pyfunction]
#[pyo3(signature = (img, size = 3))]
fn dilate(img: &PyGray, size: usize) -> PyResult<PyGray> {
    Ok(PyGray(morphology::dilate(&img.0, se(size)?)))
}

#[pyfunction]
#[pyo3(signature = (img, size = 3))]
fn open(img: &PyGray, size: usize) -> PyResult<PyGray> {
    Ok(PyGray(morphology::open(&img.0, se(size)?)))
}

#[pyfunction]
#[pyo3(signature = (img, size = 5))]
fn blur(img: &PyGray, size: usize) -> PyResult<PyGray> {
    morphology::blur(&img.0, size).map(PyGray).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (img, t = 25))]
fn threshold(img: &PyGray, t: u8) -> PyMask {
    PyMask(morphology::threshold(&img.0, t))
}

#[pyfunction]
fn find_roi(mask: &PyMask) -> PyRoi {
    PyRoi(roi::find_roi(&mask.0))
}

#[pyfunction]
fn movement_detected(r: &PyRoi, min_area: usize) -> bool {
    roi::movement_detected(&r.0, min_area)
}

/// ROI of the motion between two RGB frames.
#[pyfunction]
#[pyo3(signature = (prev, cur, threshold = 25, se_size = 3, blur_size = 5))]
fn detect_movement(prev: &PyFrame, cur: &PyFrame, threshold: u8, se_size: usize, blur_size: usize) -> PyResult<PyRoi> {
    let config = PipelineConfig {
        diff_threshold: threshold,
        se_size,
        blur_size,
        ..PipelineConfig::new(ModelSpec::with_input("probe", 1, 1))
    };
    let detector = config.detector().map_err(err)?;
    detector.detect_frames(&prev.0, &cur.0).map(PyRoi).map_err(err)
}

#[pyfunction]
fn crop(frame: &PyFrame, r: &PyRoi) -> PyResult<PyFrame> {
    preprocess::crop(&frame.0, &r.0).map(PyFrame).map_err(err)
}

#[pyfunction]
fn resize(frame: &PyFrame, width: usize, height: usize) -> PyResult<PyFrame> {
    if width == 0 || height == 0 {
        return Err(PyValueError::new_err("output size must be positive"));
    }
    Ok(PyFrame(preprocess::resize_bilinear(&frame.0, width, height)))
}

/// Model input for the ROI of `frame`, as floats in the spec's layout.
#[pyfunction]
fn prepare_input(frame: &PyFrame, r: &PyRoi, spec: &PySpec) -> PyResult<Vec<f32>> {
    let tensor = pipeline::prepare_input(&frame.0, &r.0, &spec.0).map_err(err)?;
    Ok(tensor.values_in(spec.0.layout))
}

#[pyfunction]
fn efficiency(accuracy_pct: f64, mean_latency_ms: f64, mean_power_w: f64) -> PyResult<f64> {
    metrics::efficiency(accuracy_pct, mean_latency_ms, mean_power_w).map_err(err)
}

/// Joules from `(t_ms, watts)` samples, holding the last sample until `t_end_ms`.
#[pyfunction]
fn integrate_energy(samples: Vec<(f64, f64)>, t_end_ms: f64) -> PyResult<f64> {
    let samples: Vec<PowerSample> = samples.into_iter().map(|(t_ms, watts)| PowerSample { t_ms, watts }).collect();
    metrics::integrate_energy(&samples, t_end_ms).map_err(err)
}

/// A synthetic clip: `(frames, truth_json)`.
#[pyfunction]
#[pyo3(signature = (width = 320, height = 240, frames = 120, shape = "square", object_size = 40, noise = 6, seed = 7))]
fn synthesize(
    width: usize,
    height: usize,
    frames: usize,
    shape: &str,
    object_size: usize,
    noise: u8,
    seed: u64,
) -> PyResult<(Vec<PyFrame>, String)> {
    let shape: Shape = shape.parse().map_err(err)?;
    let spec = SynthSpec { width, height, frames, shape, object_size, noise_amplitude: noise, seed, ..SynthSpec::default() };
    let clip = synth::generate_synthetic(&spec).map_err(err)?;
    Ok((clip.frames.into_iter().map(PyFrame).collect(), clip.truth.to_json()))
}

#[pyfunction]
fn read_clip(path: PathBuf) -> PyResult<Vec<PyFrame>> {
    let mut source = frame_io::open_source(path).map_err(err)?;
    let mut frames = Vec::with_capacity(source.frame_count());
    while let Some(frame) = source.read_frame().map_err(err)? {
        frames.push(PyFrame(frame));
    }
    Ok(frames)
}

fn reference(training: Option<PathBuf>, seed: u64) -> fmod_core::Result<ReferenceClassifier> {
    let samples = match training {
        Some(dir) => load_training_set(dir)?,
        None => synth::generate_training_set(20, seed),
    };
    fit_reference(&samples)
}

/// Runs the full pipeline with the reference classifier and returns the
/// metrics report as JSON.
#[pyfunction]
#[pyo3(signature = (
    frames, model = "mobilenet", threshold = 25, se_size = 3, blur_size = 5, min_area = 50,
    training = None, seed = 1, truth_json = None, power_source = "const:15", overlap = false
))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    frames: Vec<PyRef<'_, PyFrame>>,
    model: &str,
    threshold: u8,
    se_size: usize,
    blur_size: usize,
    min_area: usize,
    training: Option<PathBuf>,
    seed: u64,
    truth_json: Option<&str>,
    power_source: &str,
    overlap: bool,
) -> PyResult<String> {
    let spec = match classify::shipped_spec(model) {
        Some(spec) => spec,
        None => classify::load_model_spec(model).map_err(err)?,
    };
    let config = PipelineConfig { diff_threshold: threshold, se_size, blur_size, min_area, overlap, ..PipelineConfig::new(spec) };
    config.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let truth = truth_json.map(GroundTruth::from_json).transpose().map_err(err)?;
    let power: PowerSource = power_source.parse().map_err(err)?;
    let frames: Vec<Frame> = frames.iter().map(|f| f.0.clone()).collect();
    py.detach(move || {
        let mut clf = reference(training, seed)?;
        let mut source = frame_io::FrameSource::from_frames(frames)?;
        let mut journal = Journal::default();
        let out = pipeline::run(&mut source, &config, &mut clf, None, &mut journal, power, truth.as_ref())?;
        Ok(MetricsReport::new(out.summary, journal).to_json())
    })
    .map_err(err)
}

#[pymodule]
fn fmod(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FmodError", m.py().get_type::<FmodError>())?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyGray>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyRoi>()?;
    m.add_class::<PySpec>()?;
    m.add_function(wrap_pyfunction!(shipped_specs, m)?)?;
    m.add_function(wrap_pyfunction!(to_gray, m)?)?;
    m.add_function(wrap_pyfunction!(frame_difference, m)?)?;
    m.add_function(wrap_pyfunction!(erode, m)?)?;
    m.add_function(wrap_pyfunction!(dilate, m)?)?;
    m.add_function(wrap_pyfunction!(open, m)?)?;
    m.add_function(wrap_pyfunction!(blur, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(find_roi, m)?)?;
    m.add_function(wrap_pyfunction!(movement_detected, m)?)?;
    m.add_function(wrap_pyfunction!(detect_movement, m)?)?;
    m.add_function(wrap_pyfunction!(crop, m)?)?;
    m.add_function(wrap_pyfunction!(resize, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_input, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_energy, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(read_clip, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    Ok(())
}
