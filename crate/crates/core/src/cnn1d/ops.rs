//! Primitive forward/backward kernels over `channels × length` activations.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

pub fn output_len(len: usize, window: usize, stride: usize) -> Option<usize> {
    (len >= window && window >= 1 && stride >= 1).then(|| (len - window) / stride + 1)
}

/// Valid cross-correlation:
/// `out[o][t] = bias[o] + Σ_c Σ_k w[o][c][k] · input[c][t·stride + k]`,
/// accumulated in exactly that order.
pub fn conv1d_forward(input: &Array2<f64>, weights: &Array3<f64>, bias: &Array1<f64>, stride: usize) -> Result<Array2<f64>> {
    let (c_in, len) = input.dim();
    let (c_out, w_in, x) = weights.dim();
    if w_in != c_in || bias.len() != c_out {
        return Err(Error::shape(format!(
            "conv weights {:?} / bias {} do not fit {c_in} input channels",
            weights.dim(),
            bias.len()
        )));
    }
    let out_len = output_len(len, x, stride)
        .ok_or_else(|| Error::shape(format!("conv filter {x} stride {stride} does not fit length {len}")))?;
    let mut out = Array2::zeros((c_out, out_len));
    for o in 0..c_out {
        for t in 0..out_len {
            let mut acc = bias[o];
            for c in 0..c_in {
                for k in 0..x {
                    acc += weights[[o, c, k]] * input[[c, t * stride + k]];
                }
            }
            out[[o, t]] = acc;
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Array2<f64>,
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

/// Gradients of a convolution given the upstream gradient `grad_out`.
pub fn conv1d_backward(input: &Array2<f64>, weights: &Array3<f64>, stride: usize, grad_out: &Array2<f64>) -> ConvGrads {
    let (c_in, _) = input.dim();
    let (c_out, _, x) = weights.dim();
    let out_len = grad_out.ncols();
    let mut g_in = Array2::zeros(input.dim());
    let mut g_w = Array3::zeros(weights.dim());
    let mut g_b = Array1::zeros(c_out);
    for o in 0..c_out {
        for t in 0..out_len {
            let g = grad_out[[o, t]];
            if g == 0.0 {
                continue;
            }
            g_b[o] += g;
            for c in 0..c_in {
                for k in 0..x {
                    let i = t * stride + k;
                    g_w[[o, c, k]] += g * input[[c, i]];
                    g_in[[c, i]] += g * weights[[o, c, k]];
                }
            }
        }
    }
    ConvGrads { input: g_in, weights: g_w, bias: g_b }
}

/// Max pooling per channel. Returns the pooled values and, for each output, the
/// input index it came from (first maximum on ties).
pub fn max1d_forward(input: &Array2<f64>, window: usize, stride: usize) -> Result<(Array2<f64>, Array2<usize>)> {
    let (channels, len) = input.dim();
    let out_len = output_len(len, window, stride)
        .ok_or_else(|| Error::shape(format!("pool window {window} stride {stride} does not fit length {len}")))?;
    let mut out = Array2::zeros((channels, out_len));
    let mut arg = Array2::zeros((channels, out_len));
    for c in 0..channels {
        for t in 0..out_len {
            let start = t * stride;
            let mut best = start;
            for i in start + 1..start + window {
                if input[[c, i]] > input[[c, best]] {
                    best = i;
                }
            }
            out[[c, t]] = input[[c, best]];
            arg[[c, t]] = best;
        }
    }
    Ok((out, arg))
}

/// Routes each pooled gradient back to its recorded argmax.
pub fn max1d_backward(input_dim: (usize, usize), argmax: &Array2<usize>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut g = Array2::zeros(input_dim);
    for ((c, t), &i) in argmax.indexed_iter() {
        g[[c, i]] += grad_out[[c, t]];
    }
    g
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// `−log softmax(logits)[label]` computed via log-sum-exp.
pub fn cross_entropy(logits: &Array1<f64>, label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
