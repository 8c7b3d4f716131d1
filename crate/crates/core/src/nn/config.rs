//! Model definitions and their text form.
//!
//! ```text
//! # LeNet-style toy
//! input = 1x28x28
//! classes = 10
//! layer = conv2d out=6 kernel=5 stride=1 padding=0
//! layer = relu
//! layer = maxpool2d size=2
//! layer = flatten
//! layer = dense out=10
//! ```
//!
//! One `key = value` pair per line; `#` starts a comment. `input` is either a
//! feature count or `CxHxW`. Layers apply in file order.

use std::fmt;
use std::str::FromStr;

use crate::error::{PrancError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDef {
    Dense {
        out: usize,
    },
    Conv2d {
        out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    BatchNorm2d,
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDef {
    pub input: Vec<usize>,
    pub classes: usize,
    pub layers: Vec<LayerDef>,
}

impl ModelDef {
    /// `input -> hidden... -> classes` dense stack with ReLU between layers.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerDef::Dense { out: h });
            layers.push(LayerDef::Relu);
        }
        layers.push(LayerDef::Dense { out: classes });
        Self {
            input: vec![input],
            classes,
            layers,
        }
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

fn bad(line: usize, msg: impl fmt::Display) -> PrancError {
    PrancError::InvalidModel(format!("line {line}: {msg}"))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| bad(line, format!("{key} expects an unsigned integer, got {v:?}")))
}

fn parse_layer(line: usize, spec: &str) -> Result<LayerDef> {
    let mut words = spec.split_whitespace();
    let name = words.next().ok_or_else(|| bad(line, "empty layer"))?;
    let mut out = None;
    let mut kernel = None;
    let mut stride = 1;
    let mut padding = 0;
    let mut size = 2;
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected key=value, got {w:?}")))?;
        match k {
            "out" => out = Some(parse_usize(line, k, v)?),
            "kernel" => kernel = Some(parse_usize(line, k, v)?),
            "stride" => stride = parse_usize(line, k, v)?,
            "padding" => padding = parse_usize(line, k, v)?,
            "size" => size = parse_usize(line, k, v)?,
            _ => return Err(bad(line, format!("unknown layer option {k:?}"))),
        }
    }
    let need = |o: Option<usize>, key: &str| o.ok_or_else(|| bad(line, format!("{name} needs {key}=")));
    Ok(match name {
        "dense" | "linear" => LayerDef::Dense {
            out: need(out, "out")?,
        },
        "conv2d" | "conv" => LayerDef::Conv2d {
            out: need(out, "out")?,
            kernel: need(kernel, "kernel")?,
            stride,
            padding,
        },
        "relu" => LayerDef::Relu,
        "maxpool2d" | "maxpool" => LayerDef::MaxPool2d { size },
        "batchnorm2d" | "batchnorm" | "bn" => LayerDef::BatchNorm2d,
        "flatten" => LayerDef::Flatten,
        other => return Err(bad(line, format!("unknown layer kind {other:?}"))),
    })
}

impl FromStr for ModelDef {
    type Err = PrancError;

    fn from_str(text: &str) -> Result<Self> {
        let mut input = None;
        let mut classes = None;
        let mut layers = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, "expected key = value"))?;
            let value = value.trim();
            match key.trim() {
                "input" => {
                    let dims = value
                        .split('x')
                        .map(|d| parse_usize(line, "input", d.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    if dims.len() != 1 && dims.len() != 3 {
                        return Err(bad(line, "input must be F or CxHxW"));
                    }
                    input = Some(dims);
                }
                "classes" => classes = Some(parse_usize(line, "classes", value)?),
                "layer" => layers.push(parse_layer(line, value)?),
                other => return Err(bad(line, format!("unknown key {other:?}"))),
            }
        }
        Ok(ModelDef {
            input: input.ok_or_else(|| PrancError::InvalidModel("missing input".into()))?,
            classes: classes.ok_or_else(|| PrancError::InvalidModel("missing classes".into()))?,
            layers,
        })
    }
}

impl fmt::Display for ModelDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.input.iter().map(|d| d.to_string()).collect();
        writeln!(f, "input = {}", dims.join("x"))?;
        writeln!(f, "classes = {}", self.classes)?;
        for layer in &self.layers {
            match *layer {
                LayerDef::Dense { out } => writeln!(f, "layer = dense out={out}")?,
                LayerDef::Conv2d {
                    out,
                    kernel,
                    stride,
                    padding,
                } => writeln!(
                    f,
                    "layer = conv2d out={out} kernel={kernel} stride={stride} padding={padding}"
                )?,
                LayerDef::Relu => writeln!(f, "layer = relu")?,
                LayerDef::MaxPool2d { size } => writeln!(f, "layer = maxpool2d size={size}")?,
                LayerDef::BatchNorm2d => writeln!(f, "layer = batchnorm2d")?,
                LayerDef::Flatten => writeln!(f, "layer = flatten")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_round_trip() {
        let text = "# toy\ninput = 1x12x12\nclasses = 4\nlayer = conv2d out=3 kernel=3 padding=1\nlayer = batchnorm2d\nlayer = relu\nlayer = maxpool2d size=2\nlayer = flatten\nlayer = dense out=4\n";
        let def: ModelDef = text.parse().unwrap();
        assert_eq!(def.input, vec![1, 12, 12]);
        assert_eq!(def.layers.len(), 6);
        assert_eq!(
            def.layers[0],
            LayerDef::Conv2d {
                out: 3,
                kernel: 3,
                stride: 1,
                padding: 1
            }
        );
        let again: ModelDef = def.to_string().parse().unwrap();
        assert_eq!(def, again);
    }

    #[test]
    fn rejects_unknown_layer() {
        let err = "input = 2\nclasses = 2\nlayer = softmax\n".parse::<ModelDef>();
        assert!(err.is_err());
    }

    #[test]
    fn rejects_missing_option() {
        assert!("input = 2\nclasses = 2\nlayer = dense\n"
            .parse::<ModelDef>()
            .is_err());
    }
}
