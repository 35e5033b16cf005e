//! One-vs-rest SVM with an exponential chi-squared kernel, trained by SMO.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};

pub const DEFAULT_C_BOX: f64 = 10.0;
pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const MAX_SMO_ITERATIONS: usize = 1_000_000;

/// Pair budget for [`default_gamma`] on large training sets.
const GAMMA_SAMPLE_PAIRS: usize = 1000;
const GAMMA_EXACT_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub gamma: f64,
    /// Added to every denominator so zero bins contribute nothing.
    pub epsilon: f64,
}

impl KernelParams {
    pub fn new(gamma: f64) -> Result<Self> {
        KernelParams::with_epsilon(gamma, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(gamma: f64, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(KernelParams { gamma, epsilon })
    }
}

fn check_nonneg(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::NegativeFeature);
    }
    Ok(())
}

/// `Σ (x_i − y_i)² / (x_i + y_i + epsilon)` over nonnegative vectors.
pub fn chi2_distance(x: &[f64], y: &[f64], epsilon: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("feature lengths differ: {} vs {}", x.len(), y.len())));
    }
    check_nonneg(x)?;
    check_nonneg(y)?;
    Ok(chi2_unchecked(x, y, epsilon))
}

fn chi2_unchecked(x: &[f64], y: &[f64], epsilon: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d / (a + b + epsilon)
        })
        .sum()
}

/// `exp(−gamma · χ²(x, y))`.
pub fn chi2_kernel(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    Ok((-params.gamma * chi2_distance(x, y, params.epsilon)?).exp())
}

/// Kernel matrix over `rows × cols` feature sets (callers validate inputs).
fn kernel_matrix(a: &[Vec<f64>], b: &[Vec<f64>], params: &KernelParams) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| (-params.gamma * chi2_unchecked(&a[i], &b[j], params.epsilon)).exp())
}

pub fn gram_matrix(features: &[Vec<f64>], params: &KernelParams) -> Result<Array2<f64>> {
    validate_features(features)?;
    Ok(kernel_matrix(features, features, params))
}

fn validate_features(features: &[Vec<f64>]) -> Result<usize> {
    let dim = features.first().map(Vec::len).ok_or_else(|| Error::invalid("no features"))?;
    for f in features {
        if f.len() != dim {
            return Err(Error::shape(format!("feature lengths differ: {} vs {dim}", f.len())));
        }
        check_nonneg(f)?;
    }
    Ok(dim)
}

/// `1 / mean pairwise χ²` over the training features (all pairs up to 200
/// samples, otherwise 1000 seeded random pairs).
pub fn default_gamma(features: &[Vec<f64>]) -> Result<f64> {
    if features.len() < 2 {
        return Err(Error::invalid("default gamma needs at least 2 features"));
    }
    validate_features(features)?;
    let s = features.len();
    let mean = if s <= GAMMA_EXACT_LIMIT {
        let mut sum = 0.0;
        for i in 0..s {
            for j in i + 1..s {
                sum += chi2_unchecked(&features[i], &features[j], DEFAULT_EPSILON);
            }
        }
        sum / (s * (s - 1) / 2) as f64
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sum = 0.0;
        for _ in 0..GAMMA_SAMPLE_PAIRS {
            let i = rng.random_range(0..s);
            let j = (i + rng.random_range(1..s)) % s;
            sum += chi2_unchecked(&features[i], &features[j], DEFAULT_EPSILON);
        }
        sum / GAMMA_SAMPLE_PAIRS as f64
    };
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Degenerate("all training features are identical".into()));
    }
    Ok(1.0 / mean)
}

/// Appends an auxiliary descriptor to a learned feature vector.
pub fn concat_features(primary: &[f64], auxiliary: &[f64]) -> Result<Vec<f64>> {
    check_nonneg(primary)?;
    check_nonneg(auxiliary)?;
    Ok(primary.iter().chain(auxiliary).copied().collect())
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha < c) || (y < 0.0 && alpha > 0.0)
}

fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && alpha > 0.0) || (y < 0.0 && alpha < c)
}

/// Largest `up` score and smallest `low` score with their indices, where the
/// score of `t` is `−y_t · ∇f(α)_t`.
fn extremes(grad: &[f64], alpha: &[f64], y: &[f64], c: f64) -> (f64, usize, f64, usize) {
    let (mut m, mut mi, mut big_m, mut big_mi) = (f64::NEG_INFINITY, usize::MAX, f64::INFINITY, usize::MAX);
    for t in 0..y.len() {
        let score = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) && score > m {
            m = score;
            mi = t;
        }
        if in_low(alpha[t], y[t], c) && score < big_m {
            big_m = score;
            big_mi = t;
        }
    }
    (m, mi, big_m, big_mi)
}

fn dual_gradient(gram: &Array2<f64>, y: &[f64], alpha: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let s: f64 = (0..y.len()).filter(|&j| alpha[j] != 0.0).map(|j| y[i] * y[j] * gram[[i, j]] * alpha[j]).sum();
            s - 1.0
        })
        .collect()
}

/// Dual objective `Σ α − ½ Σ α_i α_j y_i y_j K_ij` (to be maximized).
pub fn dual_objective(gram: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * gram[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Largest KKT violation `max(0, m(α) − M(α))`, recomputed from scratch.
pub fn max_kkt_violation(gram: &Array2<f64>, y: &[f64], alpha: &[f64], c_box: f64) -> f64 {
    let grad = dual_gradient(gram, y, alpha);
    let (m, _, big_m, _) = extremes(&grad, alpha, y, c_box);
    if m.is_finite() && big_m.is_finite() {
        (m - big_m).max(0.0)
    } else {
        0.0
    }
}

/// SMO for `max Σα − ½αᵀQα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, `Q_ij = y_i y_j K_ij`.
///
/// Working pairs come from a scan in index order for the first KKT violator;
/// its partner is the opposite-side extreme, which gives the largest step.
/// Stops once `m(α) − M(α) ≤ tol`.
pub fn solve_dual(gram: &Array2<f64>, y: &[f64], c_box: f64, tol: f64) -> Result<DualSolution> {
    let n = y.len();
    if gram.dim() != (n, n) {
        return Err(Error::shape(format!("Gram matrix {:?} does not match {n} labels", gram.dim())));
    }
    if !(c_box > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid("C_box and tol must be positive"));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::Degenerate("binary problem needs both classes".into()));
    }
    const TAU: f64 = 1e-12;
    let q = |i: usize, j: usize| y[i] * y[j] * gram[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    loop {
        let (m, mi, big_m, big_mi) = extremes(&grad, &alpha, &y, c_box);
        if m - big_m <= tol {
            break;
        }
        if iterations >= MAX_SMO_ITERATIONS {
            return Err(Error::NotConverged("SMO"));
        }
        iterations += 1;

        let first = (0..n)
            .find(|&t| {
                let score = -y[t] * grad[t];
                (in_up(alpha[t], y[t], c_box) && score - big_m > tol)
                    || (in_low(alpha[t], y[t], c_box) && m - score > tol)
            })
            .expect("a violator exists while m - M > tol");
        let score = -y[first] * grad[first];
        let (i, j) = if in_up(alpha[first], y[first], c_box) && score - big_m > tol {
            (first, big_mi)
        } else {
            (mi, first)
        };

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let c = c_box;
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // bias from free support vectors, else the midpoint of the feasible range
    let free: Vec<f64> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c_box).map(|t| -y[t] * grad[t]).collect();
    let bias = if free.is_empty() {
        let (m, _, big_m, _) = extremes(&grad, &alpha, &y, c_box);
        match (m.is_finite(), big_m.is_finite()) {
            (true, true) => 0.5 * (m + big_m),
            (true, false) => m,
            (false, true) => big_m,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    Ok(DualSolution { alpha, bias, iterations })
}

/// One binary machine of the one-vs-rest ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// Indices of the support vectors in the training set (empty after loading from file).
    pub support_indices: Vec<usize>,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub c_box: f64,
}

impl BinarySvm {
    fn decision(&self, x: &[f64], params: &KernelParams) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * (-params.gamma * chi2_unchecked(sv, x, params.epsilon)).exp())
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c_box: f64,
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c_box: DEFAULT_C_BOX, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Class labels in lexicographic order; machine `k` separates `labels[k]` from the rest.
    pub labels: Vec<String>,
    pub machines: Vec<BinarySvm>,
    pub kernel: KernelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub class_index: usize,
    pub decision_values: Vec<f64>,
}

impl SvmModel {
    pub fn fit(features: &[Vec<f64>], labels: &[String], kernel: KernelParams, config: SvmConfig) -> Result<Self> {
        Ok(SvmModel::fit_with_solutions(features, labels, kernel, config)?.0)
    }

    /// Like [`SvmModel::fit`], also returning each machine's full dual solution.
    pub fn fit_with_solutions(
        features: &[Vec<f64>],
        labels: &[String],
        kernel: KernelParams,
        config: SvmConfig,
    ) -> Result<(Self, Vec<DualSolution>)> {
        if features.len() != labels.len() {
            return Err(Error::shape(format!("{} features but {} labels", features.len(), labels.len())));
        }
        validate_features(features)?;
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Degenerate("SVM training needs at least 2 classes".into()));
        }
        let gram = kernel_matrix(features, features, &kernel);
        let solved: Vec<(BinarySvm, DualSolution)> = classes
            .par_iter()
            .map(|class| {
                let y: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
                let sol = solve_dual(&gram, &y, config.c_box, config.tol)?;
                let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
                let machine = BinarySvm {
                    support_vectors: support_indices.iter().map(|&i| features[i].clone()).collect(),
                    coefficients: support_indices.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
                    support_indices,
                    bias: sol.bias,
                    c_box: config.c_box,
                };
                Ok((machine, sol))
            })
            .collect::<Result<_>>()?;
        let (machines, solutions) = solved.into_iter().unzip();
        Ok((SvmModel { labels: classes, machines, kernel }, solutions))
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.machines.iter().flat_map(|m| m.support_vectors.first()).map(Vec::len).next()
    }

    /// Decision value per class; the label with the largest value wins, ties
    /// going to the lexicographically smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if let Some(dim) = self.feature_dim() {
            if x.len() != dim {
                return Err(Error::shape(format!("feature has length {}, model expects {dim}", x.len())));
            }
        }
        check_nonneg(x)?;
        let decision_values: Vec<f64> = self.machines.iter().map(|m| m.decision(x, &self.kernel)).collect();
        let mut best = 0;
        for (k, v) in decision_values.iter().enumerate() {
            if *v > decision_values[best] {
                best = k;
            }
        }
        Ok(Prediction { label: self.labels[best].clone(), class_index: best, decision_values })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// `SVM1` payload: magic, class count, `gamma`, `epsilon`, feature dim,
    /// then per class its label, support vectors (`f32`), coefficients and
    /// bias and box constraint (`f64`).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = self.feature_dim().unwrap_or(0);
        let mut w = Writer::new(b"SVM1");
        w.len_u32(self.labels.len(), "SVM1")?;
        w.f64(self.kernel.gamma);
        w.f64(self.kernel.epsilon);
        w.len_u32(dim, "SVM1")?;
        for (label, m) in self.labels.iter().zip(&self.machines) {
            w.len_u32(label.len(), "SVM1")?;
            w.bytes(label.as_bytes());
            w.len_u32(m.support_vectors.len(), "SVM1")?;
            for sv in &m.support_vectors {
                sv.iter().for_each(|x| w.f32(*x as f32));
            }
            m.coefficients.iter().for_each(|c| w.f64(*c));
            w.f64(m.bias);
            w.f64(m.c_box);
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "SVM1", "SVM1")?;
        let k = r.u32()? as usize;
        let gamma = r.f64()?;
        let epsilon = r.f64()?;
        let kernel = KernelParams::with_epsilon(gamma, epsilon).map_err(|e| Error::Parse(format!("SVM1: {e}")))?;
        let dim = r.u32()? as usize;
        let mut labels = Vec::new();
        let mut machines = Vec::new();
        for _ in 0..k {
            let len = r.u32()? as usize;
            let label = String::from_utf8(r.bytes(len)?.to_vec()).map_err(|_| Error::Parse("SVM1: label is not UTF-8".into()))?;
            let count = r.u32()? as usize;
            r.expect_payload(count.checked_mul(dim).ok_or(Error::DimensionOverflow("SVM1"))?, 4)?;
            let support_vectors = (0..count)
                .map(|_| r.f32_vec(dim).map(|v| v.into_iter().map(f64::from).collect()))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let coefficients = r.f64_vec(count)?;
            let bias = r.f64()?;
            let c_box = r.f64()?;
            labels.push(label);
            machines.push(BinarySvm { support_indices: Vec::new(), support_vectors, coefficients, bias, c_box });
        }
        r.finish()?;
        Ok(SvmModel { labels, machines, kernel })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SvmModel::from_bytes(&binio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn kernel_examples() {
        let p = KernelParams::new(1.0).unwrap();
        let x = vec![0.3, 0.0, 2.0];
        assert_eq!(chi2_kernel(&x, &x, &p).unwrap(), 1.0);
        let k = chi2_kernel(&[1.0, 0.0], &[0.0, 1.0], &p).unwrap();
        assert!((k - (-2.0f64).exp()).abs() < 1e-11, "{k}");
        assert!((k - 0.1353).abs() < 1e-4);
        let err = chi2_kernel(&[1.0, -0.1], &[0.0, 1.0], &p).unwrap_err();
        assert_eq!(err.to_string(), "chi-squared kernel requires nonnegative features");
        assert!(chi2_kernel(&[1.0], &[0.0, 1.0], &p).is_err());
        assert!(KernelParams::new(0.0).is_err());
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = KernelParams::new(0.7).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0)).collect();
            assert_eq!(chi2_kernel(&x, &y, &p).unwrap(), chi2_kernel(&y, &x, &p).unwrap());
        }
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat_features(&[1.0, 2.0], &[3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(concat_features(&[1.0, 2.0], &[]).unwrap(), vec![1.0, 2.0]);
        assert!(concat_features(&[1.0], &[-3.0]).is_err());
        let (a, b, c, d) = (vec![0.2, 1.0], vec![0.5, 0.0], vec![3.0, 0.1, 0.0], vec![1.0, 0.4, 2.0]);
        let whole = chi2_distance(&concat_features(&a, &c).unwrap(), &concat_features(&b, &d).unwrap(), 1e-12).unwrap();
        let parts = chi2_distance(&a, &b, 1e-12).unwrap() + chi2_distance(&c, &d, 1e-12).unwrap();
        assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn default_gamma_examples() {
        // χ²([1,0],[0,1]) = 2
        let g = default_gamma(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((g - 0.5).abs() < 1e-11);
        assert!(matches!(default_gamma(&[vec![1.0, 2.0], vec![1.0, 2.0]]), Err(Error::Degenerate(_))));
        assert!(default_gamma(&[vec![1.0]]).is_err());
    }

    #[test]
    fn default_gamma_matches_brute_force_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats: Vec<Vec<f64>> = (0..40).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let mut dists = Vec::new();
        for i in 0..feats.len() {
            for j in 0..feats.len() {
                if i != j {
                    dists.push(chi2_distance(&feats[i], &feats[j], 1e-12).unwrap());
                }
            }
        }
        let brute = dists.iter().sum::<f64>() / dists.len() as f64;
        assert!((1.0 / default_gamma(&feats).unwrap() - brute).abs() < 1e-9);
        let big: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let g = default_gamma(&big).unwrap();
        assert!(g > 0.0 && g.is_finite());
        assert_eq!(g, default_gamma(&big).unwrap());
    }

    #[test]
    fn two_points_are_separated() {
        let feats = vec![vec![1.0], vec![3.0]];
        let model = SvmModel::fit(&feats, &labels(&["A", "B"]), KernelParams::new(1.0).unwrap(), SvmConfig { c_box: 10.0, tol: 1e-3 }).unwrap();
        assert_eq!(model.labels, labels(&["A", "B"]));
        assert!(model.machines.iter().all(|m| m.support_indices == vec![0, 1]));
        assert_eq!(model.predict(&[1.0]).unwrap().label, "A");
        assert_eq!(model.predict(&[3.0]).unwrap().label, "B");
    }

    #[test]
    fn bias_shift_does_not_change_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feats: Vec<Vec<f64>> = (0..30).map(|i| vec![rng.random_range(0.0..1.0) + (i % 3) as f64, rng.random_range(0.0..1.0)]).collect();
        let labs: Vec<String> = (0..30).map(|i| format!("c{}", i % 3)).collect();
        let model = SvmModel::fit(&feats, &labs, KernelParams::new(1.0).unwrap(), SvmConfig::default()).unwrap();
        let mut shifted = model.clone();
        shifted.machines.iter_mut().for_each(|m| m.bias += 0.375);
        for x in &feats {
            assert_eq!(model.predict(x).unwrap().label, shifted.predict(x).unwrap().label);
        }
        let batch = model.predict_batch(&feats).unwrap();
        for (x, p) in feats.iter().zip(batch) {
            assert_eq!(model.predict(x).unwrap(), p);
        }
    }

    #[test]
    fn ties_go_to_smallest_label() {
        let machine = BinarySvm { support_indices: vec![], support_vectors: vec![], coefficients: vec![], bias: 0.0, c_box: 1.0 };
        let model = SvmModel { labels: labels(&["a", "b", "c"]), machines: vec![machine; 3], kernel: KernelParams::new(1.0).unwrap() };
        assert_eq!(model.predict(&[0.5]).unwrap().label, "a");
    }

    #[test]
    fn fit_errors() {
        let p = KernelParams::new(1.0).unwrap();
        assert!(matches!(SvmModel::fit(&[vec![1.0], vec![2.0]], &labels(&["A", "A"]), p, SvmConfig::default()), Err(Error::Degenerate(_))));
        assert!(matches!(SvmModel::fit(&[vec![1.0], vec![-2.0]], &labels(&["A", "B"]), p, SvmConfig::default()), Err(Error::NegativeFeature)));
        assert!(SvmModel::fit(&[vec![1.0], vec![2.0, 1.0]], &labels(&["A", "B"]), p, SvmConfig::default()).is_err());
        let model = SvmModel::fit(&[vec![1.0], vec![2.0]], &labels(&["A", "B"]), p, SvmConfig::default()).unwrap();
        assert!(matches!(model.predict(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn solutions_satisfy_box_and_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let feats: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        // noisy labels force bounded multipliers
        let labs: Vec<String> = feats.iter().map(|f| if f[0] + 0.3 * rng.random_range(-1.0..1.0) > 0.5 { "p" } else { "n" }.to_string()).collect();
        let params = KernelParams::new(2.0).unwrap();
        let cfg = SvmConfig { c_box: 1.0, tol: 1e-3 };
        let (_, sols) = SvmModel::fit_with_solutions(&feats, &labs, params, cfg).unwrap();
        let gram = gram_matrix(&feats, &params).unwrap();
        for (k, sol) in sols.iter().enumerate() {
            let class = ["n", "p"][k];
            let y: Vec<f64> = labs.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            assert!(sol.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
            assert!(max_kkt_violation(&gram, &y, &sol.alpha, 1.0) <= 1e-3);
            let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(balance.abs() < 1e-9);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let feats = vec![vec![0.5, 1.0], vec![1.5, 0.25], vec![0.0, 2.0], vec![2.0, 0.0]];
        let q: Vec<Vec<f64>> = feats.iter().map(|f| f.iter().map(|x| *x as f32 as f64).collect()).collect();
        let model = SvmModel::fit(&q, &labels(&["a", "b", "a", "b"]), KernelParams::new(0.5).unwrap(), SvmConfig::default()).unwrap();
        let mut back = SvmModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
        assert_eq!(back.labels, model.labels);
        for (a, b) in back.machines.iter_mut().zip(&model.machines) {
            a.support_indices = b.support_indices.clone();
        }
        assert_eq!(back, model);
        let mut bytes = model.to_bytes().unwrap();
        bytes.extend_from_slice(&[0]);
        assert!(SvmModel::from_bytes(&bytes).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.0f64..5.0, dim)
        }

        proptest! {
            #[test]
            fn kernel_is_symmetric_and_bounded(x in point(6), y in point(6), gamma in 0.01f64..5.0) {
                let p = KernelParams::new(gamma).unwrap();
                let kxy = chi2_kernel(&x, &y, &p).unwrap();
                prop_assert_eq!(kxy, chi2_kernel(&y, &x, &p).unwrap());
                prop_assert!(kxy > 0.0 && kxy <= 1.0);
                prop_assert_eq!(chi2_kernel(&x, &x, &p).unwrap(), 1.0);
            }

            #[test]
            fn smo_respects_the_dual_constraints(points in proptest::collection::vec(point(3), 4..20), c in 0.5f64..20.0) {
                let y: Vec<f64> = (0..points.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
                let gram = gram_matrix(&points, &KernelParams::new(1.0).unwrap()).unwrap();
                let sol = solve_dual(&gram, &y, c, DEFAULT_TOL).unwrap();
                prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
                let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
                prop_assert!(balance.abs() < 1e-9 * c * points.len() as f64);
                prop_assert!(max_kkt_violation(&gram, &y, &sol.alpha, c) <= DEFAULT_TOL);
                prop_assert!(dual_objective(&gram, &y, &sol.alpha) >= 0.0);
            }
        }
    }
}
