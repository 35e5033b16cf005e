//! Reference implementations used only by tests. They share no code with the
//! library beyond its public types.

#![allow(dead_code)]

use ndarray::{Array1, Array2, Array3};

/// Dominant eigenpairs by power iteration with Hotelling deflation.
///
/// Vectors are sign-normalized so their largest-magnitude entry is positive
/// (first such entry on ties). Iterates until the eigen-residual stops
/// improving below `1e-13 · ‖A‖`.
pub fn power_eigen(a: &Array2<f64>, count: usize) -> (Vec<f64>, Vec<Array1<f64>>) {
    let n = a.nrows();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut work = a.clone();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for k in 0..count {
        // deterministic start that is not orthogonal to any eigenvector in practice
        let mut v = Array1::from_shape_fn(n, |i| 1.0 + ((i * 7 + k * 13) % 11) as f64 / 10.0);
        v /= v.dot(&v).sqrt();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let w = work.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let next = &w / norm;
            lambda = next.dot(&work.dot(&next));
            let residual = &work.dot(&next) - &(&next * lambda);
            v = next;
            if residual.dot(&residual).sqrt() < 1e-13 * scale {
                break;
            }
        }
        let mut best = 0;
        for i in 1..n {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        for i in 0..n {
            for j in 0..n {
                work[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        values.push(lambda);
        vectors.push(v);
    }
    (values, vectors)
}

/// Sample covariance with the `1/(S−1)` normalization, by explicit loops.
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    let (s, n) = x.dim();
    let mut mean = vec![0.0; n];
    for r in 0..s {
        for c in 0..n {
            mean[c] += x[[r, c]];
        }
    }
    mean.iter_mut().for_each(|m| *m /= s as f64);
    let mut cov = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for r in 0..s {
                acc += (x[[r, i]] - mean[i]) * (x[[r, j]] - mean[j]);
            }
            cov[[i, j]] = acc / (s as f64 - 1.0);
        }
    }
    cov
}

/// Valid cross-correlation: `bias[o] + Σ_c Σ_k w[o,c,k] · x[c, t·stride + k]`,
/// accumulated in exactly that order.
pub fn naive_conv(x: &Array2<f64>, w: &Array3<f64>, bias: &Array1<f64>, stride: usize) -> Array2<f64> {
    let (c_in, len) = x.dim();
    let (c_out, _, k) = w.dim();
    let out_len = (len - k) / stride + 1;
    let mut out = Array2::zeros((c_out, out_len));
    for o in 0..c_out {
        for t in 0..out_len {
            let mut acc = bias[o];
            for c in 0..c_in {
                for j in 0..k {
                    acc += w[[o, c, j]] * x[[c, t * stride + j]];
                }
            }
            out[[o, t]] = acc;
        }
    }
    out
}

/// Max over each window; the first maximal position wins ties.
pub fn naive_max(x: &Array2<f64>, window: usize, stride: usize) -> (Array2<f64>, Array2<usize>) {
    let (ch, len) = x.dim();
    let out_len = (len - window) / stride + 1;
    let mut out = Array2::zeros((ch, out_len));
    let mut arg = Array2::zeros((ch, out_len));
    for c in 0..ch {
        for t in 0..out_len {
            let mut best = t * stride;
            for j in 1..window {
                if x[[c, t * stride + j]] > x[[c, best]] {
                    best = t * stride + j;
                }
            }
            out[[c, t]] = x[[c, best]];
            arg[[c, t]] = best;
        }
    }
    (out, arg)
}

/// Whether `a + shift·I` admits a Cholesky factorization, i.e. whether the
/// smallest eigenvalue of the symmetric matrix `a` exceeds `−shift`.
pub fn cholesky_succeeds(a: &Array2<f64>, shift: f64) -> bool {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]] + shift;
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return false;
        }
        l[[j, j]] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / l[[j, j]];
        }
    }
    true
}

/// Euclidean projection onto `{α : 0 ≤ α ≤ c, yᵀα = 0}` with `y ∈ {±1}`.
///
/// The projection is `clip(z − ν·y, 0, c)` for the unique `ν` that restores
/// the equality; `yᵀ·clip(z − ν·y)` is non-increasing in `ν`, so bisection finds it.
pub fn project_box_hyperplane(z: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> f64 { z.iter().zip(y).map(|(zi, yi)| yi * (zi - nu * yi).clamp(0.0, c)).sum() };
    let span = z.iter().map(|v| v.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    z.iter().zip(y).map(|(zi, yi)| (zi - nu * yi).clamp(0.0, c)).collect()
}

/// `Σα − ½ αᵀQα` with `Q_ij = y_i y_j K_ij`.
pub fn dual_value(k: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Accelerated projected gradient ascent on the SVM dual.
pub fn qp_oracle(k: &Array2<f64>, y: &[f64], c: f64, iterations: usize) -> Vec<f64> {
    let n = y.len();
    let q = Array2::from_shape_fn((n, n), |(i, j)| y[i] * y[j] * k[[i, j]]);
    // Lipschitz bound: the largest absolute row sum of Q
    let lip = (0..n).map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-12);
    let mut alpha = vec![0.0; n];
    let mut prev = alpha.clone();
    let mut t = 1.0f64;
    let mut best = alpha.clone();
    let mut best_val = dual_value(k, y, &alpha);
    for _ in 0..iterations {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let point: Vec<f64> = alpha.iter().zip(&prev).map(|(a, p)| a + momentum * (a - p)).collect();
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[[i, j]] * point[j]).sum::<f64>()).collect();
        let step: Vec<f64> = point.iter().zip(&grad).map(|(p, g)| p + g / lip).collect();
        prev = std::mem::replace(&mut alpha, project_box_hyperplane(&step, y, c));
        t = t_next;
        let val = dual_value(k, y, &alpha);
        if val > best_val {
            best_val = val;
            best = alpha.clone();
        }
    }
    best
}

/// Largest violation of the dual optimality conditions, from first principles:
/// with `s_t = y_t (1 − (Qα)_t)`, any `i` that may move up and `j` that may
/// move down must satisfy `s_i ≤ s_j`.
pub fn kkt_residual(k: &Array2<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let s: Vec<f64> = (0..n).map(|i| y[i] * (1.0 - (0..n).map(|j| y[i] * y[j] * k[[i, j]] * alpha[j]).sum::<f64>())).collect();
    let up = |t: usize| (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
    let down = |t: usize| (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
    let hi = (0..n).filter(|&t| up(t)).map(|t| s[t]).fold(f64::NEG_INFINITY, f64::max);
    let lo = (0..n).filter(|&t| down(t)).map(|t| s[t]).fold(f64::INFINITY, f64::min);
    if hi.is_finite() && lo.is_finite() {
        (hi - lo).max(0.0)
    } else {
        0.0
    }
}

/// `Σ (x−y)²/(x+y+ε)`, written out independently of the library.
pub fn chi2(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let num = (x[i] - y[i]) * (x[i] - y[i]);
        acc += num / (x[i] + y[i] + 1e-12);
    }
    acc
}

/// Leave-one-out nearest-centroid accuracy on fixed-length vectors.
pub fn loocv_nearest_centroid(features: &[Vec<f64>], labels: &[usize], classes: usize) -> f64 {
    let dim = features[0].len();
    let mut correct = 0;
    for held in 0..features.len() {
        let mut sums = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (i, f) in features.iter().enumerate() {
            if i == held {
                continue;
            }
            counts[labels[i]] += 1;
            sums[labels[i]].iter_mut().zip(f).for_each(|(s, v)| *s += v);
        }
        let mut best = (f64::INFINITY, 0);
        for c in 0..classes {
            if counts[c] == 0 {
                continue;
            }
            let d: f64 = sums[c].iter().zip(&features[held]).map(|(s, v)| (s / counts[c] as f64 - v).powi(2)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        if best.1 == labels[held] {
            correct += 1;
        }
    }
    correct as f64 / features.len() as f64
}
