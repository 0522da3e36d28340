//! Classifier backends: model specs, the built-in nearest-centroid
//! reference classifier, and the external inference adapter.

mod adapter;
mod reference;
mod spec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use adapter::{
    classify_external, protocol, AdapterHandle, Endpoint, DEFAULT_ADAPTER_TIMEOUT_MS,
};
pub use reference::{fit_reference, load_training_set, ReferenceClassifier, FEATURE_SIDE};
pub use spec::{
    load_model_spec, shipped_spec, shipped_specs, Layout, ModelSpec, Normalization, OTHER_CLASS,
    TARGET_CLASSES,
};

use crate::error::{Error, Result};
use crate::preprocess::InputTensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub score: f64,
}

/// Anything that turns a model input tensor into a class distribution.
pub trait Classifier: Send {
    fn classify(&mut self, tensor: &InputTensor, spec: &ModelSpec) -> Result<Vec<ClassScore>>;
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classify(&mut self, tensor: &InputTensor, spec: &ModelSpec) -> Result<Vec<ClassScore>> {
        (**self).classify(tensor, spec)
    }
}

/// Highest-scoring entry; ties go to the earliest.
pub fn top(scores: &[ClassScore]) -> Option<&ClassScore> {
    scores.iter().fold(None, |best: Option<&ClassScore>, s| match best {
        Some(b) if b.score >= s.score => Some(b),
        _ => Some(s),
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Folds raw backend scores into target classes through the spec's label
/// map, summing scores that land on the same class, without renormalizing.
pub fn map_scores(raw: &[(String, f32)], spec: &ModelSpec) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (label, score) in raw {
        if !score.is_finite() || *score < 0.0 {
            return Err(Error::Protocol(format!("invalid score {score} for label {label:?}")));
        }
        *out.entry(spec.map_label(label).to_string()).or_insert(0.0) += *score as f64;
    }
    Ok(out)
}

/// Maps and renormalizes so the returned scores sum to 1.
pub fn mapped_distribution(raw: &[(String, f32)], spec: &ModelSpec) -> Result<Vec<ClassScore>> {
    let mapped = map_scores(raw, spec)?;
    let total: f64 = mapped.values().sum();
    if !(total > 0.0) {
        return Err(Error::Protocol("backend scores sum to zero".into()));
    }
    Ok(mapped
        .into_iter()
        .map(|(label, s)| ClassScore { label, score: s / total })
        .collect())
}
