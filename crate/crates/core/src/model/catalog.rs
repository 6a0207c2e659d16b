//! The eight encoded CNN benchmarks.

use std::collections::BTreeMap;
use std::path::Path;

use super::{parse_model, ModelError, ModelGraph};

/// Canonical benchmark identifiers, in reporting order.
pub const BENCHMARKS: [&str; 8] = [
    "alexnet",
    "googlenet",
    "inception-v3",
    "lenet",
    "overfeat",
    "resnet-50",
    "vgg11",
    "vgg19",
];

const BUNDLED: [(&str, &str); 8] = [
    ("alexnet", include_str!("../../catalog/alexnet.model")),
    ("googlenet", include_str!("../../catalog/googlenet.model")),
    ("inception-v3", include_str!("../../catalog/inception-v3.model")),
    ("lenet", include_str!("../../catalog/lenet.model")),
    ("overfeat", include_str!("../../catalog/overfeat.model")),
    ("resnet-50", include_str!("../../catalog/resnet-50.model")),
    ("vgg11", include_str!("../../catalog/vgg11.model")),
    ("vgg19", include_str!("../../catalog/vgg19.model")),
];

/// Descriptor sources keyed by benchmark name.
#[derive(Debug, Clone)]
pub struct Catalog {
    entries: BTreeMap<String, String>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::bundled()
    }
}

impl Catalog {
    /// The descriptors compiled into the crate.
    pub fn bundled() -> Self {
        Catalog {
            entries: BUNDLED
                .iter()
                .map(|(n, t)| (n.to_string(), t.to_string()))
                .collect(),
        }
    }

    /// Loads every `*.model` file in `dir`, keyed by file stem.
    pub fn from_dir(dir: &Path) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut entries = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("model") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| ModelError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            entries.insert(stem.to_ascii_lowercase(), text);
        }
        Ok(Catalog { entries })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(&canonical_name(name))
    }

    /// Raw descriptor text for `name`.
    pub fn source(&self, name: &str) -> Option<&str> {
        self.entries.get(&canonical_name(name)).map(String::as_str)
    }

    pub fn lookup(&self, name: &str) -> Result<ModelGraph, ModelError> {
        match self.source(name) {
            Some(text) => parse_model(text),
            None => Err(ModelError::UnknownBenchmark {
                name: name.to_string(),
                available: self.names(),
            }),
        }
    }
}

/// Maps common spellings onto the canonical identifiers.
pub fn canonical_name(name: &str) -> String {
    let lower = name.trim().to_ascii_lowercase();
    match lower.as_str() {
        "inception3" | "inceptionv3" | "inception_v3" => "inception-v3".into(),
        "resnet50" | "resnet_50" => "resnet-50".into(),
        "lenet5" | "lenet-5" => "lenet".into(),
        "vgg-11" => "vgg11".into(),
        "vgg-19" => "vgg19".into(),
        _ => lower,
    }
}
