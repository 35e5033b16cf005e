use std::fmt;

use crate::error::{Error, Result};

use super::ops::output_len;

/// One layer of the network.
///
/// The text form mirrors the usual `Conv1D<X-C-S>` / `Max1D<Y-S>` notation:
/// `conv X C S`, `max Y S`, `relu`, `fc U`, `softmax K`. For `conv`, `C` is the
/// number of output channels; the input channel count is inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1D { filter: usize, out_channels: usize, stride: usize },
    Max1D { window: usize, stride: usize },
    ReLU,
    FullyConnected { units: usize },
    /// Linear map to `classes` logits followed by softmax.
    SoftmaxOutput { classes: usize },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv1D { filter, out_channels, stride } => write!(f, "conv {filter} {out_channels} {stride}"),
            LayerSpec::Max1D { window, stride } => write!(f, "max {window} {stride}"),
            LayerSpec::ReLU => write!(f, "relu"),
            LayerSpec::FullyConnected { units } => write!(f, "fc {units}"),
            LayerSpec::SoftmaxOutput { classes } => write!(f, "softmax {classes}"),
        }
    }
}

impl LayerSpec {
    fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let nums: Vec<usize> = parts
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse(format!("architecture line {lineno}: expected integers in {line:?}")))?;
        let arity = |n: usize| -> Result<()> {
            if nums.len() != n {
                return Err(Error::Parse(format!("architecture line {lineno}: {kind} takes {n} values")));
            }
            Ok(())
        };
        let layer = match kind {
            "conv" => {
                arity(3)?;
                LayerSpec::Conv1D { filter: nums[0], out_channels: nums[1], stride: nums[2] }
            }
            "max" => {
                arity(2)?;
                LayerSpec::Max1D { window: nums[0], stride: nums[1] }
            }
            "relu" => {
                arity(0)?;
                LayerSpec::ReLU
            }
            "fc" => {
                arity(1)?;
                LayerSpec::FullyConnected { units: nums[0] }
            }
            "softmax" => {
                arity(1)?;
                LayerSpec::SoftmaxOutput { classes: nums[0] }
            }
            other => return Err(Error::Parse(format!("architecture line {lineno}: unknown layer {other:?}"))),
        };
        if nums.contains(&0) {
            return Err(Error::Parse(format!("architecture line {lineno}: sizes must be at least 1")));
        }
        Ok(layer)
    }
}

/// Parses an architecture listing, one layer per line; blank lines and `#`
/// comments are ignored.
pub fn parse_architecture(text: &str) -> Result<Vec<LayerSpec>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| LayerSpec::parse_line(l, i))
        .collect()
}

pub fn format_architecture(layers: &[LayerSpec]) -> String {
    layers.iter().map(|l| format!("{l}\n")).collect()
}

/// `conv 5 32 2, relu, max 2 2, conv 3 64 1, relu, max 2 2, fc 64, relu, softmax K`.
pub fn default_architecture(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv1D { filter: 5, out_channels: 32, stride: 2 },
        LayerSpec::ReLU,
        LayerSpec::Max1D { window: 2, stride: 2 },
        LayerSpec::Conv1D { filter: 3, out_channels: 64, stride: 1 },
        LayerSpec::ReLU,
        LayerSpec::Max1D { window: 2, stride: 2 },
        LayerSpec::FullyConnected { units: 64 },
        LayerSpec::ReLU,
        LayerSpec::SoftmaxOutput { classes },
    ]
}

/// A shape-checked architecture for a fixed `input_channels × input_length` input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    input_channels: usize,
    input_length: usize,
    layers: Vec<LayerSpec>,
    /// `(channels, length)` after each layer; dense layers report `(units, 1)`.
    shapes: Vec<(usize, usize)>,
    feature_layer: usize,
}

impl NetworkSpec {
    pub fn new(input_channels: usize, input_length: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_channels == 0 || input_length == 0 {
            return Err(Error::shape("network input must have at least one channel and one step"));
        }
        match layers.iter().position(|l| matches!(l, LayerSpec::SoftmaxOutput { .. })) {
            Some(i) if i + 1 == layers.len() => {}
            _ => return Err(Error::invalid("softmax must appear exactly once, as the last layer")),
        }
        let feature_layer = layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::FullyConnected { .. }))
            .ok_or_else(|| Error::invalid("a fully-connected feature layer must precede softmax"))?;

        let mut shapes = Vec::with_capacity(layers.len());
        let (mut ch, mut len) = (input_channels, input_length);
        let mut dense = false;
        for (i, layer) in layers.iter().enumerate() {
            (ch, len) = match *layer {
                LayerSpec::Conv1D { filter, out_channels, stride } => {
                    if dense {
                        return Err(Error::invalid(format!("layer {i}: conv after a dense layer")));
                    }
                    let l = output_len(len, filter, stride).ok_or_else(|| {
                        Error::shape(format!("layer {i} ({layer}): input length {len} shorter than filter"))
                    })?;
                    (out_channels, l)
                }
                LayerSpec::Max1D { window, stride } => {
                    if dense {
                        return Err(Error::invalid(format!("layer {i}: pooling after a dense layer")));
                    }
                    let l = output_len(len, window, stride).ok_or_else(|| {
                        Error::shape(format!("layer {i} ({layer}): input length {len} shorter than window"))
                    })?;
                    (ch, l)
                }
                LayerSpec::ReLU => (ch, len),
                LayerSpec::FullyConnected { units } => {
                    dense = true;
                    (units, 1)
                }
                LayerSpec::SoftmaxOutput { classes } => (classes, 1),
            };
            if ch == 0 || len == 0 {
                return Err(Error::shape(format!("layer {i} ({layer}) has an empty output")));
            }
            shapes.push((ch, len));
        }
        Ok(NetworkSpec { input_channels, input_length, layers, shapes, feature_layer })
    }

    /// Parses a listing produced by [`NetworkSpec::to_text`]: an `input m L`
    /// line followed by the layers.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty network spec".into()))?;
        let dims: Vec<usize> = match header.strip_prefix("input ") {
            Some(rest) => rest.split_whitespace().map(|p| p.parse().ok()).collect::<Option<_>>(),
            None => None,
        }
        .filter(|d: &Vec<usize>| d.len() == 2)
        .ok_or_else(|| Error::Parse(format!("expected `input m L`, got {header:?}")))?;
        let rest: Vec<&str> = lines.collect();
        NetworkSpec::new(dims[0], dims[1], parse_architecture(&rest.join("\n"))?)
    }

    pub fn to_text(&self) -> String {
        format!("input {} {}\n{}", self.input_channels, self.input_length, format_architecture(&self.layers))
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_length(&self) -> usize {
        self.input_length
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output `(channels, length)` of layer `i`.
    pub fn output_shape(&self, i: usize) -> (usize, usize) {
        self.shapes[i]
    }

    /// Input `(channels, length)` of layer `i`.
    pub fn input_shape(&self, i: usize) -> (usize, usize) {
        if i == 0 {
            (self.input_channels, self.input_length)
        } else {
            self.shapes[i - 1]
        }
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().expect("validated").0
    }

    /// Index of the last fully-connected layer (the feature layer).
    pub fn feature_layer(&self) -> usize {
        self.feature_layer
    }

    /// Length of the vector returned by feature extraction.
    pub fn feature_len(&self) -> usize {
        self.shapes[self.feature_layer].0
    }
}
