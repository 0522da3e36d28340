//! Per-model input contracts loaded from JSON `.spec` files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four object classes the detector reports.
pub const TARGET_CLASSES: [&str; 4] = ["bird", "train", "airplane", "car"];

/// Class reported for backend labels outside the label map.
pub const OTHER_CLASS: &str = "other";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "channel-last")]
    ChannelLast,
    #[serde(rename = "channel-first")]
    ChannelFirst,
}

impl Layout {
    pub fn wire_tag(self) -> u8 {
        match self {
            Layout::ChannelLast => 0,
            Layout::ChannelFirst => 1,
        }
    }

    pub fn from_wire_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Layout::ChannelLast),
            1 => Some(Layout::ChannelFirst),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::ChannelLast => "channel-last",
            Layout::ChannelFirst => "channel-first",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    /// ImageNet statistics.
    fn default() -> Self {
        Normalization { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub input_width: usize,
    pub input_height: usize,
    pub normalization: Normalization,
    pub layout: Layout,
    /// Backend label -> target class.
    pub label_map: BTreeMap<String, String>,
}

/// On-disk shape of a `.spec` file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: String,
    input: [usize; 2],
    mean: [f32; 3],
    std: [f32; 3],
    layout: String,
    #[serde(default)]
    label_map: BTreeMap<String, String>,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with_classes(text, &TARGET_CLASSES)
    }

    pub fn from_json_with_classes(text: &str, classes: &[&str]) -> Result<Self> {
        let raw: SpecFile = serde_json::from_str(text)?;
        let layout = match raw.layout.as_str() {
            "channel-last" => Layout::ChannelLast,
            "channel-first" => Layout::ChannelFirst,
            other => return Err(Error::InvalidSpec(format!("unknown layout {other:?}"))),
        };
        let spec = ModelSpec {
            name: raw.name,
            input_width: raw.input[0],
            input_height: raw.input[1],
            normalization: Normalization { mean: raw.mean, std: raw.std },
            layout,
            label_map: raw.label_map,
        };
        spec.validate(classes)?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let raw = SpecFile {
            name: self.name.clone(),
            input: [self.input_width, self.input_height],
            mean: self.normalization.mean,
            std: self.normalization.std,
            layout: self.layout.as_str().to_string(),
            label_map: self.label_map.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("spec serializes")
    }

    pub fn validate(&self, classes: &[&str]) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSpec("empty model name".into()));
        }
        if self.input_width == 0 || self.input_height == 0 {
            return Err(Error::InvalidSpec(format!(
                "input size must be positive, got {}x{}",
                self.input_width, self.input_height
            )));
        }
        let n = &self.normalization;
        if n.mean.iter().chain(&n.std).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("normalization constants must be finite".into()));
        }
        if n.std.contains(&0.0) {
            return Err(Error::InvalidSpec("std must be nonzero".into()));
        }
        if let Some((k, v)) = self.label_map.iter().find(|(_, v)| !classes.contains(&v.as_str())) {
            return Err(Error::InvalidSpec(format!("label {k:?} maps to unknown class {v:?}")));
        }
        Ok(())
    }

    /// Target class for a backend label. Labels that already name a target
    /// class pass through; everything else is [`OTHER_CLASS`].
    pub fn map_label<'a>(&'a self, label: &'a str) -> &'a str {
        match self.label_map.get(label) {
            Some(class) => class,
            None if TARGET_CLASSES.contains(&label) => label,
            None => OTHER_CLASS,
        }
    }

    /// Unnamed spec with ImageNet normalization and no label map.
    pub fn with_input(name: &str, width: usize, height: usize) -> Self {
        ModelSpec {
            name: name.to_string(),
            input_width: width,
            input_height: height,
            normalization: Normalization::default(),
            layout: Layout::ChannelLast,
            label_map: BTreeMap::new(),
        }
    }

    #[cfg(test)]
    pub(crate) fn test_spec(width: usize, height: usize) -> Self {
        Self::with_input("test", width, height)
    }
}

pub fn load_model_spec(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    ModelSpec::from_json(&text)
}

const SHIPPED: [(&str, &str); 4] = [
    ("mobilenet.spec", include_str!("../../../../specs/mobilenet.spec")),
    ("resnet50.spec", include_str!("../../../../specs/resnet50.spec")),
    ("inception_v4.spec", include_str!("../../../../specs/inception_v4.spec")),
    ("vit_base.spec", include_str!("../../../../specs/vit_base.spec")),
];

/// The model specs bundled with the crate, keyed by file name.
pub fn shipped_specs() -> Vec<(&'static str, ModelSpec)> {
    SHIPPED
        .iter()
        .map(|(file, text)| (*file, ModelSpec::from_json(text).expect("shipped spec is valid")))
        .collect()
}

/// Looks up a shipped spec by model name (`mobilenet`) or file name (`mobilenet.spec`).
pub fn shipped_spec(name: &str) -> Option<ModelSpec> {
    shipped_specs()
        .into_iter()
        .find(|(file, spec)| *file == name || spec.name == name)
        .map(|(_, spec)| spec)
}
