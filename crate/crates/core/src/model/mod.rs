//! Model intermediate representation: an ordered chain of forward-pass layers
//! with derived parameter counts, per-sample output sizes and forward FLOPs.
//!
//! Graphs are built once (from a descriptor, the catalog, or
//! [`ModelGraph::from_layers`]) and are immutable afterwards.

mod catalog;
mod descriptor;
mod infer;

pub use catalog::{canonical_name, Catalog, BENCHMARKS};
pub use descriptor::{parse_model, serialize_model};
pub use infer::{infer_layer, LayerShape};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced while building or parsing a model.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown layer kind `{kind}` at line {line}, column {column}")]
    UnknownKind {
        line: usize,
        column: usize,
        kind: String,
    },
    #[error("shape mismatch between layer `{previous}` and layer `{next}`: {detail}")]
    ShapeMismatch {
        previous: String,
        next: String,
        detail: String,
    },
    #[error("invalid dimension in layer `{layer}`: {detail}")]
    InvalidDimension { layer: String, detail: String },
    #[error("model `{0}` has no layers")]
    Empty(String),
    #[error("unknown benchmark `{name}` (available: {})", available.join(", "))]
    UnknownBenchmark {
        name: String,
        available: Vec<String>,
    },
    #[error("cannot read model descriptor {path}: {message}")]
    Io { path: String, message: String },
}

/// The kind of a forward-pass layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Convolution,
    Pooling,
    FullyConnected,
    Normalization,
    Activation,
    Flatten,
    Concat,
    ResidualAdd,
    Loss,
    /// A linearized multi-branch module (inception or residual block).
    Block,
}

impl LayerKind {
    /// Compute-demand layers; the profiler never splits between two of them.
    pub fn is_compute_demand(self) -> bool {
        matches!(self, LayerKind::Convolution | LayerKind::Block)
    }

    /// Canonical descriptor token.
    pub fn token(self) -> &'static str {
        match self {
            LayerKind::Convolution => "conv",
            LayerKind::Pooling => "pool",
            LayerKind::FullyConnected => "fc",
            LayerKind::Normalization => "norm",
            LayerKind::Activation => "act",
            LayerKind::Flatten => "flatten",
            LayerKind::Concat => "concat",
            LayerKind::ResidualAdd => "add",
            LayerKind::Loss => "loss",
            LayerKind::Block => "block",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        let kind = match token.to_ascii_lowercase().as_str() {
            "conv" | "convolution" => LayerKind::Convolution,
            "pool" | "pooling" | "maxpool" | "avgpool" => LayerKind::Pooling,
            "fc" | "fullyconnected" | "fully_connected" | "dense" | "affine" => {
                LayerKind::FullyConnected
            }
            "norm" | "normalization" | "lrn" | "batchnorm" => LayerKind::Normalization,
            "act" | "activation" | "relu" => LayerKind::Activation,
            "flatten" | "reshape" => LayerKind::Flatten,
            "concat" => LayerKind::Concat,
            "add" | "residual_add" | "residualadd" => LayerKind::ResidualAdd,
            "loss" | "softmax" => LayerKind::Loss,
            "block" => LayerKind::Block,
            _ => return None,
        };
        Some(kind)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Per-sample activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Spatial { height: u64, width: u64, channels: u64 },
    Flat(u64),
}

impl Shape {
    pub fn spatial(height: u64, width: u64, channels: u64) -> Self {
        Shape::Spatial {
            height,
            width,
            channels,
        }
    }

    pub fn elems(&self) -> u64 {
        match *self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => height * width * channels,
            Shape::Flat(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Spatial {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            Shape::Flat(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Max,
    Avg,
}

/// Kind-specific structural hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Convolution {
        kernel: u64,
        in_channels: u64,
        out_channels: u64,
        stride: u64,
        padding: u64,
    },
    Pooling {
        window: u64,
        stride: u64,
        padding: u64,
        mode: PoolMode,
    },
    FullyConnected {
        inputs: u64,
        outputs: u64,
    },
    Normalization,
    Activation,
    Flatten,
    Concat {
        out: Shape,
    },
    ResidualAdd,
    Loss,
    Block {
        params: u64,
        out: Shape,
        flops: u64,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> LayerKind {
        match self {
            Hyperparams::Convolution { .. } => LayerKind::Convolution,
            Hyperparams::Pooling { .. } => LayerKind::Pooling,
            Hyperparams::FullyConnected { .. } => LayerKind::FullyConnected,
            Hyperparams::Normalization => LayerKind::Normalization,
            Hyperparams::Activation => LayerKind::Activation,
            Hyperparams::Flatten => LayerKind::Flatten,
            Hyperparams::Concat { .. } => LayerKind::Concat,
            Hyperparams::ResidualAdd => LayerKind::ResidualAdd,
            Hyperparams::Loss => LayerKind::Loss,
            Hyperparams::Block { .. } => LayerKind::Block,
        }
    }
}

/// One forward-pass layer with its derived sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based position in forward order.
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub hyperparams: Hyperparams,
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub param_count: u64,
    pub output_elems_per_sample: u64,
    /// Forward pass only, two FLOPs per multiply-add.
    pub compute_flops_per_sample: u64,
}

/// An ordered layer chain plus the training batch configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    /// Samples per step per worker.
    pub batch_size: u64,
    pub bytes_per_element: u64,
}

pub const DEFAULT_BYTES_PER_ELEMENT: u64 = 4;

impl ModelGraph {
    /// Builds a validated graph by running shape inference along the chain.
    pub fn from_layers(
        name: impl Into<String>,
        input_shape: Shape,
        batch_size: u64,
        bytes_per_element: u64,
        layers: Vec<(String, Hyperparams)>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if layers.is_empty() {
            return Err(ModelError::Empty(name));
        }
        if batch_size == 0 {
            return Err(ModelError::InvalidDimension {
                layer: name,
                detail: "batch size must be positive".into(),
            });
        }
        if bytes_per_element == 0 {
            return Err(ModelError::InvalidDimension {
                layer: name,
                detail: "element width must be positive".into(),
            });
        }
        if input_shape.elems() == 0 {
            return Err(ModelError::InvalidDimension {
                layer: name,
                detail: "input shape has zero elements".into(),
            });
        }

        let mut specs = Vec::with_capacity(layers.len());
        let mut shape = input_shape;
        let mut previous = String::from("<input>");
        for (i, (layer_name, hyper)) in layers.into_iter().enumerate() {
            let inferred = infer_layer(&layer_name, &hyper, &shape).map_err(|e| match e {
                ModelError::ShapeMismatch { detail, .. } => ModelError::ShapeMismatch {
                    previous: previous.clone(),
                    next: layer_name.clone(),
                    detail,
                },
                other => other,
            })?;
            let hyper = inferred.resolved;
            specs.push(LayerSpec {
                index: i + 1,
                name: layer_name.clone(),
                kind: hyper.kind(),
                hyperparams: hyper,
                input_shape: shape,
                output_shape: inferred.output,
                param_count: inferred.param_count,
                output_elems_per_sample: inferred.output.elems(),
                compute_flops_per_sample: inferred.flops,
            });
            shape = inferred.output;
            previous = layer_name;
        }

        Ok(ModelGraph {
            name,
            input_shape,
            layers: specs,
            batch_size,
            bytes_per_element,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_param_count(&self) -> u64 {
        self.layers.iter().map(|l| l.param_count).sum()
    }

    /// Model size: every parameter at the configured element width.
    pub fn total_param_bytes(&self) -> u64 {
        self.total_param_count() * self.bytes_per_element
    }

    /// Parameter bytes of every layer, in forward order.
    pub fn param_bytes(&self) -> Vec<u64> {
        self.layers
            .iter()
            .map(|l| l.param_count * self.bytes_per_element)
            .collect()
    }

    /// Per-step output bytes of every layer (scales with the batch size).
    pub fn output_bytes(&self) -> Vec<u64> {
        self.layers
            .iter()
            .map(|l| self.layer_output_bytes(l))
            .collect()
    }

    /// Per-step output bytes of the layer at 1-based `index`.
    pub fn output_bytes_at(&self, index: usize) -> Option<u64> {
        index
            .checked_sub(1)
            .and_then(|i| self.layers.get(i))
            .map(|l| self.layer_output_bytes(l))
    }

    fn layer_output_bytes(&self, layer: &LayerSpec) -> u64 {
        layer.output_elems_per_sample * self.batch_size * self.bytes_per_element
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind).collect()
    }

    /// Forward FLOPs per sample of layers `range` (0-based, half-open).
    pub fn forward_flops(&self, range: std::ops::Range<usize>) -> u64 {
        self.layers[range]
            .iter()
            .map(|l| l.compute_flops_per_sample)
            .sum()
    }

    pub fn with_batch_size(&self, batch_size: u64) -> Result<Self, ModelError> {
        if batch_size == 0 {
            return Err(ModelError::InvalidDimension {
                layer: self.name.clone(),
                detail: "batch size must be positive".into(),
            });
        }
        Ok(ModelGraph {
            batch_size,
            ..self.clone()
        })
    }

    /// Returns a copy whose layer at 1-based `index` carries `param_count`
    /// parameters. Only composite blocks may be rewritten this way; other
    /// kinds derive their counts from structure.
    pub fn with_block_params(&self, index: usize, param_count: u64) -> Option<Self> {
        let mut out = self.clone();
        let layer = out.layers.get_mut(index.checked_sub(1)?)?;
        match &mut layer.hyperparams {
            Hyperparams::Block { params, .. } => {
                *params = param_count;
                layer.param_count = param_count;
                Some(out)
            }
            _ => None,
        }
    }
}
