use std::collections::BTreeMap;
use std::path::Path;

use super::{softmax, ClassScore, Classifier, ModelSpec, Normalization};
use crate::error::{Error, Result};
use crate::frame_io;
use crate::image::Frame;
use crate::morphology::to_gray;
use crate::preprocess::{denormalize, resize_bilinear_gray, InputTensor};

/// Side length of the square grayscale feature image.
pub const FEATURE_SIDE: usize = 32;

/// Nearest-centroid classifier over 32×32 grayscale thumbnails scaled to
/// `[0, 1]`. Scores are a softmax over negative Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceClassifier {
    classes: Vec<String>,
    centroids: Vec<Vec<f64>>,
}

impl ReferenceClassifier {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Builds a classifier from explicit centroids (each of length 1024).
    pub fn from_centroids(classes: Vec<String>, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if classes.len() < 2 || classes.len() != centroids.len() {
            return Err(Error::InsufficientClasses(classes.len().min(centroids.len())));
        }
        if centroids.iter().any(|c| c.len() != FEATURE_SIDE * FEATURE_SIDE) {
            return Err(Error::Parse("centroid length must be 1024".into()));
        }
        Ok(ReferenceClassifier { classes, centroids })
    }

    /// The feature vector a frame contributes to (or is compared against).
    pub fn features(frame: &Frame) -> Vec<f64> {
        let thumb = resize_bilinear_gray(&to_gray(frame), FEATURE_SIDE, FEATURE_SIDE);
        thumb.data().iter().map(|&v| v as f64 / 255.0).collect()
    }

    pub fn distances(&self, features: &[f64]) -> Vec<f64> {
        self.centroids
            .iter()
            .map(|c| c.iter().zip(features).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect()
    }

    pub fn classify_features(&self, features: &[f64]) -> Vec<ClassScore> {
        let logits: Vec<f64> = self.distances(features).iter().map(|d| -d).collect();
        self.classes
            .iter()
            .zip(softmax(&logits))
            .map(|(label, score)| ClassScore { label: label.clone(), score })
            .collect()
    }

    pub fn classify_frame(&self, frame: &Frame) -> Vec<ClassScore> {
        self.classify_features(&Self::features(frame))
    }

    /// Undoes the tensor normalization, then classifies the recovered image.
    pub fn classify_tensor(&self, tensor: &InputTensor, norm: &Normalization) -> Vec<ClassScore> {
        self.classify_frame(&denormalize(tensor, norm))
    }
}

impl Classifier for ReferenceClassifier {
    fn classify(&mut self, tensor: &InputTensor, spec: &ModelSpec) -> Result<Vec<ClassScore>> {
        Ok(self.classify_tensor(tensor, &spec.normalization))
    }
}

/// Per-class mean of the samples' feature vectors. Classes are ordered by name.
pub fn fit_reference(samples: &[(Frame, String)]) -> Result<ReferenceClassifier> {
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (frame, class) in samples {
        let feats = ReferenceClassifier::features(frame);
        let (sum, n) = sums
            .entry(class.as_str())
            .or_insert_with(|| (vec![0.0; FEATURE_SIDE * FEATURE_SIDE], 0));
        sum.iter_mut().zip(&feats).for_each(|(s, f)| *s += f);
        *n += 1;
    }
    if sums.len() < 2 {
        return Err(Error::InsufficientClasses(sums.len()));
    }
    let (classes, centroids) = sums
        .into_iter()
        .map(|(class, (sum, n))| (class.to_string(), sum.into_iter().map(|s| s / n as f64).collect()))
        .unzip();
    Ok(ReferenceClassifier { classes, centroids })
}

/// Reads `<dir>/<class>/*.{ppm,pgm}` into labelled samples.
pub fn load_training_set(dir: impl AsRef<Path>) -> Result<Vec<(Frame, String)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut class_dirs: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut samples = Vec::new();
    for class_dir in class_dirs {
        let class = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Parse(format!("non-UTF-8 class directory {}", class_dir.display())))?
            .to_string();
        for path in frame_io::list_images(&class_dir)? {
            samples.push((frame_io::read_image(&path)?, class.clone()));
        }
    }
    Ok(samples)
}
