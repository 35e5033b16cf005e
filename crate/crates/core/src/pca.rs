//! Principal component analysis over pooled frame descriptors, with the
//! channel count chosen by proportion of variance (PoV).

use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::binio::{self, Reader, Writer};
use crate::corpus::{DescriptorSequence, MultiChannelSeries};
use crate::error::{Error, Result};

pub const DEFAULT_POV: f64 = 0.8;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as the *rows* of the returned matrix. Each eigenvector is sign-normalized so
/// that its largest-magnitude entry is positive (ties: lowest index).
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape(format!("eigendecomposition needs a square matrix, got {:?}", a.dim())));
    }
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    let off_norm = |a: &Array2<f64>| {
        let mut s = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                s += 2.0 * a[[p, q]] * a[[p, q]];
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= JACOBI_TOL * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[p, k]] = a[[k, p]];
                        a[[k, q]] = s * akp + c * akq;
                        a[[q, k]] = a[[k, q]];
                    }
                }
                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&a) > JACOBI_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotConverged("Jacobi eigendecomposition"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the original index order for equal eigenvalues
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (row, &i) in order.iter().enumerate() {
        let mut col = v.column(i).to_owned();
        normalize_sign(&mut col);
        vectors.row_mut(row).assign(&col);
    }
    Ok((values, vectors))
}

/// Flips `vec` so its largest-magnitude entry (first one on ties) is positive.
pub fn normalize_sign(vec: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in vec.iter().enumerate() {
        if x.abs() > vec[best].abs() {
            best = i;
        }
    }
    if vec.len() > 0 && vec[best] < 0.0 {
        vec.mapv_inplace(|x| -x);
    }
}

/// Cumulative proportion of variance for a descending eigenvalue list.
fn cumulative_pov(eigenvalues: &[f64]) -> Vec<f64> {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            acc / total
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `m × n`; rows are unit eigenvectors of the covariance, by descending eigenvalue.
    pub components: Array2<f64>,
    /// All `n` eigenvalues, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fits on the rows of `samples` (`S × n`) and keeps the smallest number of
    /// components whose cumulative variance share reaches `pov_threshold`.
    pub fn fit(samples: &Array2<f64>, pov_threshold: f64) -> Result<Self> {
        let (s, n) = samples.dim();
        if s < 2 {
            return Err(Error::invalid(format!("PCA needs at least 2 samples, got {s}")));
        }
        if n == 0 {
            return Err(Error::shape("PCA samples have zero columns"));
        }
        if !(pov_threshold > 0.0 && pov_threshold <= 1.0) {
            return Err(Error::invalid(format!("pov_threshold must be in (0, 1], got {pov_threshold}")));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite PCA sample"));
        }

        let mean = samples.mean_axis(Axis(0)).expect("s >= 2");
        let centered = samples - &mean;
        let cov = centered.t().dot(&centered) / (s as f64 - 1.0);
        let (mut eigenvalues, vectors) = symmetric_eigen(&cov)?;
        eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
        let total: f64 = eigenvalues.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("degenerate data: zero total variance".into()));
        }
        let curve = cumulative_pov(&eigenvalues);
        let m = curve.iter().position(|&c| c >= pov_threshold - 1e-12).map_or(n, |k| k + 1);
        let components = vectors.slice(ndarray::s![..m, ..]).to_owned();
        Ok(PcaModel { mean, components, eigenvalues })
    }

    /// Pools every frame of `sequences` as one sample row and fits.
    pub fn fit_sequences<'a>(
        sequences: impl IntoIterator<Item = &'a DescriptorSequence>,
        pov_threshold: f64,
    ) -> Result<Self> {
        let seqs: Vec<&DescriptorSequence> = sequences.into_iter().collect();
        let n = seqs.first().map(|s| s.dim()).ok_or_else(|| Error::invalid("no sequences to fit PCA on"))?;
        if let Some(bad) = seqs.iter().find(|s| s.dim() != n) {
            return Err(Error::shape(format!("{} has dimension {}, expected {n}", bad.video_id, bad.dim())));
        }
        let rows: usize = seqs.iter().map(|s| s.frames()).sum();
        let mut samples = Array2::zeros((rows, n));
        let mut r = 0;
        for seq in seqs {
            for row in seq.data().rows() {
                samples.row_mut(r).assign(&row.mapv(f64::from));
                r += 1;
            }
        }
        PcaModel::fit(&samples, pov_threshold)
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn retained(&self) -> usize {
        self.components.nrows()
    }

    pub fn pov_achieved(&self) -> f64 {
        cumulative_pov(&self.eigenvalues)[self.retained() - 1]
    }

    pub fn explained_variance_curve(&self) -> Vec<f64> {
        cumulative_pov(&self.eigenvalues)
    }

    /// Projects each frame: channel `c` at time `t` is `components[c] · (seq[t] − mean)`.
    pub fn transform(&self, seq: &DescriptorSequence) -> Result<MultiChannelSeries> {
        if seq.dim() != self.input_dim() {
            return Err(Error::shape(format!(
                "{} has dimension {}, PCA expects {}",
                seq.video_id,
                seq.dim(),
                self.input_dim()
            )));
        }
        let centered = seq.data().mapv(f64::from) - &self.mean;
        Ok(MultiChannelSeries { video_id: seq.video_id.clone(), data: self.components.dot(&centered.t()) })
    }

    /// Maps an `m × T` series back to `T × n` descriptor space.
    pub fn inverse_transform(&self, series: &MultiChannelSeries) -> Result<Array2<f64>> {
        if series.channels() != self.retained() {
            return Err(Error::shape(format!(
                "series has {} channels, PCA retains {}",
                series.channels(),
                self.retained()
            )));
        }
        Ok(series.data.t().dot(&self.components) + &self.mean)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(b"PCA1");
        w.len_u32(self.input_dim(), "PCA1")?;
        w.len_u32(self.retained(), "PCA1")?;
        self.mean.iter().for_each(|x| w.f64(*x));
        self.eigenvalues.iter().for_each(|x| w.f64(*x));
        self.components.iter().for_each(|x| w.f64(*x));
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "PCA1", "PCA1")?;
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        if m == 0 || m > n {
            return Err(Error::Parse(format!("PCA1: retained {m} not in 1..={n}")));
        }
        let mean = Array1::from(r.f64_vec(n)?);
        let eigenvalues = r.f64_vec(n)?;
        let comps = r.f64_vec(m.checked_mul(n).ok_or(Error::DimensionOverflow("PCA1"))?)?;
        r.finish()?;
        let components = Array2::from_shape_vec((m, n), comps).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(PcaModel { mean, components, eigenvalues })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PcaModel::from_bytes(&binio::read_file(path)?)
    }
}
