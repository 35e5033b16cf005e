use std::path::Path;

use ndarray::{Array1, Array2, Array3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};

use super::ops;
use super::spec::{LayerSpec, NetworkSpec};

/// Learned parameters of one layer. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv { weights: Array3<f64>, bias: Array1<f64> },
    Dense { weights: Array2<f64>, bias: Array1<f64> },
    Empty,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        match self {
            LayerParams::Conv { weights, bias } => {
                LayerParams::Conv { weights: Array3::zeros(weights.dim()), bias: Array1::zeros(bias.len()) }
            }
            LayerParams::Dense { weights, bias } => {
                LayerParams::Dense { weights: Array2::zeros(weights.dim()), bias: Array1::zeros(bias.len()) }
            }
            LayerParams::Empty => LayerParams::Empty,
        }
    }

    /// Weights then bias, as flat slices.
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            LayerParams::Conv { weights, bias } => vec![weights.as_slice().unwrap(), bias.as_slice().unwrap()],
            LayerParams::Dense { weights, bias } => vec![weights.as_slice().unwrap(), bias.as_slice().unwrap()],
            LayerParams::Empty => vec![],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            LayerParams::Conv { weights, bias } => {
                vec![weights.as_slice_mut().unwrap(), bias.as_slice_mut().unwrap()]
            }
            LayerParams::Dense { weights, bias } => {
                vec![weights.as_slice_mut().unwrap(), bias.as_slice_mut().unwrap()]
            }
            LayerParams::Empty => vec![],
        }
    }
}

/// All learned parameters, one entry per layer of the owning [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerParams>,
}

fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.random_range(-limit..limit)).collect()
}

impl NetworkState {
    /// Seeded Xavier-uniform weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers()
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let (in_ch, in_len) = spec.input_shape(i);
                match *layer {
                    LayerSpec::Conv1D { filter, out_channels, .. } => {
                        let w = xavier(&mut rng, in_ch * filter, out_channels * filter, out_channels * in_ch * filter);
                        LayerParams::Conv {
                            weights: Array3::from_shape_vec((out_channels, in_ch, filter), w).unwrap(),
                            bias: Array1::zeros(out_channels),
                        }
                    }
                    LayerSpec::FullyConnected { units } | LayerSpec::SoftmaxOutput { classes: units } => {
                        let fan_in = in_ch * in_len;
                        let w = xavier(&mut rng, fan_in, units, units * fan_in);
                        LayerParams::Dense {
                            weights: Array2::from_shape_vec((units, fan_in), w).unwrap(),
                            bias: Array1::zeros(units),
                        }
                    }
                    LayerSpec::Max1D { .. } | LayerSpec::ReLU => LayerParams::Empty,
                }
            })
            .collect();
        NetworkState { layers }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkState { layers: self.layers.iter().map(LayerParams::zeros_like).collect() }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.tensors()).map(<[f64]>::len).sum()
    }

    /// Flat view over all parameters in declaration order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.tensors()).flat_map(|t| t.iter().copied()).collect()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &NetworkState, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ta, tb) in a.tensors_mut().into_iter().zip(b.tensors()) {
                ta.iter_mut().zip(tb).for_each(|(x, y)| *x += scale * y);
            }
        }
    }

    /// Rounds every parameter to the nearest `f32`, matching what a model file stores.
    pub fn quantize_f32(&mut self) {
        for layer in &mut self.layers {
            for t in layer.tensors_mut() {
                t.iter_mut().for_each(|x| *x = *x as f32 as f64);
            }
        }
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let ok = self.layers.len() == spec.layers().len()
            && self.layers.iter().zip(spec.layers()).enumerate().all(|(i, (p, l))| {
                let (in_ch, in_len) = spec.input_shape(i);
                match (*l, p) {
                    (LayerSpec::Conv1D { filter, out_channels, .. }, LayerParams::Conv { weights, bias }) => {
                        weights.dim() == (out_channels, in_ch, filter) && bias.len() == out_channels
                    }
                    (LayerSpec::FullyConnected { units }, LayerParams::Dense { weights, bias })
                    | (LayerSpec::SoftmaxOutput { classes: units }, LayerParams::Dense { weights, bias }) => {
                        weights.dim() == (units, in_ch * in_len) && bias.len() == units
                    }
                    (LayerSpec::Max1D { .. } | LayerSpec::ReLU, LayerParams::Empty) => true,
                    _ => false,
                }
            });
        if !ok {
            return Err(Error::shape("network parameters do not match the architecture"));
        }
        Ok(())
    }
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    pub inputs: Vec<Array2<f64>>,
    argmax: Vec<Option<Array2<usize>>>,
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
}

fn flatten(a: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(a.iter().copied())
}

fn dense(params: &LayerParams) -> (&Array2<f64>, &Array1<f64>) {
    match params {
        LayerParams::Dense { weights, bias } => (weights, bias),
        _ => unreachable!("validated state"),
    }
}

fn check_input(spec: &NetworkSpec, input: &Array2<f64>) -> Result<()> {
    if input.dim() != (spec.input_channels(), spec.input_length()) {
        return Err(Error::shape(format!(
            "network expects {}x{} input, got {:?}",
            spec.input_channels(),
            spec.input_length(),
            input.dim()
        )));
    }
    Ok(())
}

/// Runs layers `0..stop` and records their inputs.
fn run_layers(
    spec: &NetworkSpec,
    state: &NetworkState,
    input: &Array2<f64>,
    stop: usize,
) -> Result<(Array2<f64>, Vec<Array2<f64>>, Vec<Option<Array2<usize>>>)> {
    check_input(spec, input)?;
    state.check(spec)?;
    let mut inputs = Vec::with_capacity(stop);
    let mut argmax = Vec::with_capacity(stop);
    let mut x = input.clone();
    for (layer, params) in spec.layers()[..stop].iter().zip(&state.layers) {
        let mut arg = None;
        let y = match (*layer, params) {
            (LayerSpec::Conv1D { stride, .. }, LayerParams::Conv { weights, bias }) => {
                ops::conv1d_forward(&x, weights, bias, stride)?
            }
            (LayerSpec::Max1D { window, stride }, _) => {
                let (y, a) = ops::max1d_forward(&x, window, stride)?;
                arg = Some(a);
                y
            }
            (LayerSpec::ReLU, _) => x.mapv(|v| v.max(0.0)),
            (LayerSpec::FullyConnected { .. }, p) | (LayerSpec::SoftmaxOutput { .. }, p) => {
                let (w, b) = dense(p);
                let z = w.dot(&flatten(&x)) + b;
                z.into_shape_with_order((w.nrows(), 1)).unwrap()
            }
            _ => unreachable!("validated state"),
        };
        inputs.push(std::mem::replace(&mut x, y));
        argmax.push(arg);
    }
    Ok((x, inputs, argmax))
}

/// Forward pass: class probabilities plus the activations needed for backprop.
pub fn forward(spec: &NetworkSpec, state: &NetworkState, input: &Array2<f64>) -> Result<ForwardCache> {
    let (out, inputs, argmax) = run_layers(spec, state, input, spec.layers().len())?;
    let logits = flatten(&out);
    let probabilities = ops::softmax(&logits);
    Ok(ForwardCache { inputs, argmax, logits, probabilities })
}

pub fn predict_proba(spec: &NetworkSpec, state: &NetworkState, input: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(forward(spec, state, input)?.probabilities)
}

/// Activations of the last fully-connected layer, after any ReLU that follows it.
pub fn extract_features(spec: &NetworkSpec, state: &NetworkState, input: &Array2<f64>) -> Result<Vec<f64>> {
    let last = spec.layers().len() - 1;
    let (out, _, _) = run_layers(spec, state, input, last)?;
    Ok(out.iter().copied().collect())
}

/// Softmax cross-entropy `−log p[label]` of a cached forward pass.
pub fn loss(cache: &ForwardCache, label: usize) -> f64 {
    ops::cross_entropy(&cache.logits, label)
}

/// Gradients of `−log p[label]` with respect to every parameter.
pub fn backward(spec: &NetworkSpec, state: &NetworkState, cache: &ForwardCache, label: usize) -> Result<NetworkState> {
    let classes = spec.classes();
    if label >= classes {
        return Err(Error::invalid(format!("label {label} out of range for {classes} classes")));
    }
    let mut grads = state.zeros_like();
    let mut g_out: Array2<f64> = {
        let mut d = cache.probabilities.clone();
        d[label] -= 1.0;
        d.into_shape_with_order((classes, 1)).unwrap()
    };
    for i in (0..spec.layers().len()).rev() {
        let input = &cache.inputs[i];
        let g_in = match (spec.layers()[i], &state.layers[i]) {
            (LayerSpec::Conv1D { stride, .. }, LayerParams::Conv { weights, .. }) => {
                let g = ops::conv1d_backward(input, weights, stride, &g_out);
                grads.layers[i] = LayerParams::Conv { weights: g.weights, bias: g.bias };
                g.input
            }
            (LayerSpec::Max1D { .. }, _) => {
                let arg = cache.argmax[i].as_ref().expect("pool layer records argmax");
                ops::max1d_backward(input.dim(), arg, &g_out)
            }
            (LayerSpec::ReLU, _) => {
                let mut g = g_out.clone();
                Zip::from(&mut g).and(input).for_each(|g, &x| {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                });
                g
            }
            (LayerSpec::FullyConnected { .. }, p) | (LayerSpec::SoftmaxOutput { .. }, p) => {
                let (w, _) = dense(p);
                let d = flatten(&g_out);
                let x = flatten(input);
                let gw = Array2::from_shape_fn(w.dim(), |(r, c)| d[r] * x[c]);
                let gx = w.t().dot(&d);
                grads.layers[i] = LayerParams::Dense { weights: gw, bias: d };
                gx.into_shape_with_order(input.dim()).unwrap()
            }
            _ => unreachable!("validated state"),
        };
        g_out = g_in;
    }
    Ok(grads)
}

impl NetworkState {
    /// `CNN1` payload: magic, length-prefixed spec text, then every tensor in
    /// declaration order as `f32` little-endian.
    pub fn to_bytes(&self, spec: &NetworkSpec) -> Result<Vec<u8>> {
        self.check(spec)?;
        let text = spec.to_text();
        let mut w = Writer::new(b"CNN1");
        w.len_u32(text.len(), "CNN1")?;
        w.bytes(text.as_bytes());
        for t in self.layers.iter().flat_map(|l| l.tensors()) {
            t.iter().for_each(|x| w.f32(*x as f32));
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(NetworkSpec, NetworkState)> {
        let mut r = Reader::new(bytes, "CNN1", "CNN1")?;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.bytes(len)?).map_err(|_| Error::Parse("CNN1: spec is not UTF-8".into()))?;
        let spec = NetworkSpec::from_text(text)?;
        let mut state = NetworkState::init(&spec, 0);
        r.expect_payload(state.param_count(), 4)?;
        for t in state.layers.iter_mut().flat_map(|l| l.tensors_mut()) {
            for x in t.iter_mut() {
                *x = f64::from(r.f32()?);
            }
        }
        r.finish()?;
        if state.flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("CNN1: non-finite parameter".into()));
        }
        Ok((spec, state))
    }

    pub fn save(&self, spec: &NetworkSpec, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes(spec)?)
    }

    pub fn load(path: &Path) -> Result<(NetworkSpec, NetworkState)> {
        NetworkState::from_bytes(&binio::read_file(path)?)
    }
}
