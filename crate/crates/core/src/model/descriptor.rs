//! Line-oriented model descriptor format.
//!
//! ```text
//! # comment
//! model vgg-mini batch=64 elem_bytes=4 input=32x32x3
//! conv1 conv k=3 out=64 pad=1
//! pool1 pool k=2 stride=2 mode=max
//! mixed block params=1200 out=16x16x32 flops=90000
//! fc1 fc in=8192 out=10
//! ```
//!
//! The header line must come first. `input` may be omitted when the first
//! layer is `fc` with an explicit `in=`.

use std::fmt::Write as _;

use super::{Hyperparams, LayerKind, ModelError, ModelGraph, PoolMode, Shape, DEFAULT_BYTES_PER_ELEMENT};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &code[s..i],
                    column: code[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &code[s..],
            column: code[..s].chars().count() + 1,
        });
    }
    out
}

struct KeyValues<'a> {
    line: usize,
    pairs: Vec<(&'a str, &'a str, usize)>,
}

impl<'a> KeyValues<'a> {
    fn new(line: usize, tokens: &[Token<'a>]) -> Result<Self, ModelError> {
        let mut pairs: Vec<(&'a str, &'a str, usize)> = Vec::new();
        for t in tokens {
            let Some((k, v)) = t.text.split_once('=') else {
                return Err(syntax(line, t.column, format!("expected key=value, found `{}`", t.text)));
            };
            if k.is_empty() || v.is_empty() {
                return Err(syntax(line, t.column, format!("malformed key=value `{}`", t.text)));
            }
            if pairs.iter().any(|(pk, _, _)| *pk == k) {
                return Err(syntax(line, t.column, format!("duplicate key `{k}`")));
            }
            pairs.push((k, v, t.column));
        }
        Ok(KeyValues { line, pairs })
    }

    fn take(&mut self, keys: &[&str]) -> Option<(&'a str, usize)> {
        let pos = self.pairs.iter().position(|(k, _, _)| keys.contains(k))?;
        let (_, v, c) = self.pairs.remove(pos);
        Some((v, c))
    }

    fn uint(&mut self, keys: &[&str]) -> Result<Option<u64>, ModelError> {
        match self.take(keys) {
            None => Ok(None),
            Some((v, c)) => parse_uint(v)
                .map(Some)
                .ok_or_else(|| syntax(self.line, c, format!("`{}` is not a nonnegative integer", v))),
        }
    }

    fn require_uint(&mut self, keys: &[&str], column: usize) -> Result<u64, ModelError> {
        self.uint(keys)?
            .ok_or_else(|| syntax(self.line, column, format!("missing required key `{}`", keys[0])))
    }

    fn shape(&mut self, keys: &[&str]) -> Result<Option<Shape>, ModelError> {
        match self.take(keys) {
            None => Ok(None),
            Some((v, c)) => parse_shape(v)
                .map(Some)
                .ok_or_else(|| syntax(self.line, c, format!("`{v}` is not a shape (HxWxC or N)"))),
        }
    }

    fn finish(self) -> Result<(), ModelError> {
        match self.pairs.first() {
            Some((k, _, c)) => Err(syntax(self.line, *c, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn syntax(line: usize, column: usize, message: String) -> ModelError {
    ModelError::Syntax {
        line,
        column,
        message,
    }
}

fn parse_uint(v: &str) -> Option<u64> {
    v.replace('_', "").parse().ok()
}

fn parse_shape(v: &str) -> Option<Shape> {
    let dims: Vec<u64> = v.split('x').map(parse_uint).collect::<Option<_>>()?;
    match dims.as_slice() {
        [n] => Some(Shape::Flat(*n)),
        [h, w, c] => Some(Shape::spatial(*h, *w, *c)),
        _ => None,
    }
}

/// Parses a descriptor document into a validated [`ModelGraph`].
pub fn parse_model(text: &str) -> Result<ModelGraph, ModelError> {
    let mut header: Option<(String, u64, u64, Option<Shape>)> = None;
    let mut layers: Vec<(String, Hyperparams)> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let tokens = tokenize(raw);
        let Some(first) = tokens.first() else {
            continue;
        };

        if header.is_none() {
            if first.text != "model" {
                return Err(syntax(line, first.column, "expected header `model <name> ...`".into()));
            }
            let Some(name) = tokens.get(1) else {
                return Err(syntax(line, first.column + 5, "missing model name".into()));
            };
            let mut kv = KeyValues::new(line, &tokens[2..])?;
            let batch = kv.require_uint(&["batch"], name.column)?;
            let elem = kv.uint(&["elem_bytes"])?.unwrap_or(DEFAULT_BYTES_PER_ELEMENT);
            let input = kv.shape(&["input"])?;
            kv.finish()?;
            header = Some((name.text.to_string(), batch, elem, input));
            continue;
        }

        if first.text == "model" {
            return Err(syntax(line, first.column, "duplicate model header".into()));
        }
        let Some(kind_tok) = tokens.get(1) else {
            return Err(syntax(line, first.column, format!("layer `{}` has no kind", first.text)));
        };
        let kind_text = kind_tok.text.strip_prefix("kind=").unwrap_or(kind_tok.text);
        let Some(kind) = LayerKind::from_token(kind_text) else {
            return Err(ModelError::UnknownKind {
                line,
                column: kind_tok.column,
                kind: kind_text.to_string(),
            });
        };
        if layers.iter().any(|(n, _)| n == first.text) {
            return Err(syntax(line, first.column, format!("duplicate layer name `{}`", first.text)));
        }
        let mut kv = KeyValues::new(line, &tokens[2..])?;
        let col = kind_tok.column;
        let hyper = match kind {
            LayerKind::Convolution => {
                let kernel = kv.require_uint(&["k", "kernel"], col)?;
                let out_channels = kv.require_uint(&["out"], col)?;
                let in_channels = kv.uint(&["in"])?.unwrap_or(0);
                let stride = kv.uint(&["stride"])?.unwrap_or(1);
                let padding = kv.uint(&["pad", "padding"])?.unwrap_or(0);
                Hyperparams::Convolution {
                    kernel,
                    in_channels,
                    out_channels,
                    stride,
                    padding,
                }
            }
            LayerKind::Pooling => {
                let window = kv.require_uint(&["k", "window"], col)?;
                let stride = kv.uint(&["stride"])?.unwrap_or(window);
                let padding = kv.uint(&["pad", "padding"])?.unwrap_or(0);
                let mode = match kv.take(&["mode"]) {
                    None => {
                        if kind_text.eq_ignore_ascii_case("avgpool") {
                            PoolMode::Avg
                        } else {
                            PoolMode::Max
                        }
                    }
                    Some(("max", _)) => PoolMode::Max,
                    Some(("avg", _)) => PoolMode::Avg,
                    Some((v, c)) => return Err(syntax(line, c, format!("unknown pooling mode `{v}`"))),
                };
                Hyperparams::Pooling {
                    window,
                    stride,
                    padding,
                    mode,
                }
            }
            LayerKind::FullyConnected => {
                let outputs = kv.require_uint(&["out"], col)?;
                let inputs = kv.uint(&["in"])?.unwrap_or(0);
                Hyperparams::FullyConnected { inputs, outputs }
            }
            LayerKind::Block => {
                let params = kv.require_uint(&["params"], col)?;
                let out = kv
                    .shape(&["out"])?
                    .ok_or_else(|| syntax(line, col, "missing required key `out`".into()))?;
                let flops = kv.require_uint(&["flops"], col)?;
                Hyperparams::Block { params, out, flops }
            }
            LayerKind::Concat => {
                let out = kv
                    .shape(&["out"])?
                    .ok_or_else(|| syntax(line, col, "missing required key `out`".into()))?;
                Hyperparams::Concat { out }
            }
            LayerKind::Normalization => Hyperparams::Normalization,
            LayerKind::Activation => Hyperparams::Activation,
            LayerKind::Flatten => Hyperparams::Flatten,
            LayerKind::ResidualAdd => Hyperparams::ResidualAdd,
            LayerKind::Loss => Hyperparams::Loss,
        };
        kv.finish()?;
        layers.push((first.text.to_string(), hyper));
    }

    let Some((name, batch, elem, input)) = header else {
        return Err(syntax(last_line.max(1), 1, "missing `model` header".into()));
    };
    let input = match input {
        Some(s) => s,
        None => match layers.first() {
            Some((_, Hyperparams::FullyConnected { inputs, .. })) if *inputs > 0 => Shape::Flat(*inputs),
            _ => {
                return Err(syntax(
                    1,
                    1,
                    "header needs `input=` unless the first layer is `fc in=...`".into(),
                ))
            }
        },
    };
    ModelGraph::from_layers(name, input, batch, elem, layers)
}

/// Writes a graph back as a descriptor. Inferred widths are written
/// explicitly, so parsing the output reproduces the same graph.
pub fn serialize_model(graph: &ModelGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model {} batch={} elem_bytes={} input={}",
        graph.name, graph.batch_size, graph.bytes_per_element, graph.input_shape
    );
    for layer in &graph.layers {
        let _ = write!(out, "{} {}", layer.name, layer.kind.token());
        match &layer.hyperparams {
            Hyperparams::Convolution {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
            } => {
                let _ = write!(
                    out,
                    " k={kernel} in={in_channels} out={out_channels} stride={stride} pad={padding}"
                );
            }
            Hyperparams::Pooling {
                window,
                stride,
                padding,
                mode,
            } => {
                let mode = match mode {
                    PoolMode::Max => "max",
                    PoolMode::Avg => "avg",
                };
                let _ = write!(out, " k={window} stride={stride} pad={padding} mode={mode}");
            }
            Hyperparams::FullyConnected { inputs, outputs } => {
                let _ = write!(out, " in={inputs} out={outputs}");
            }
            Hyperparams::Block { params, out: shape, flops } => {
                let _ = write!(out, " params={params} out={shape} flops={flops}");
            }
            Hyperparams::Concat { out: shape } => {
                let _ = write!(out, " out={shape}");
            }
            Hyperparams::Normalization
            | Hyperparams::Activation
            | Hyperparams::Flatten
            | Hyperparams::ResidualAdd
            | Hyperparams::Loss => {}
        }
        out.push('\n');
    }
    out
}
