//! On-disk corpus: descriptor sequences (`FDS1`), the JSON manifest, split
//! protocols, zero-padding alignment and a synthetic temporal-order corpus.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};

const FDS_MAGIC: &[u8; 4] = b"FDS1";

/// One video as a `T × n` time-major matrix: row `t` describes the flow between
/// frames `t` and `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSequence {
    pub video_id: String,
    data: Array2<f32>,
}

impl DescriptorSequence {
    pub fn new(video_id: impl Into<String>, data: Array2<f32>) -> Result<Self> {
        let (t, n) = data.dim();
        if t == 0 || n == 0 {
            return Err(Error::shape(format!("descriptor sequence must be non-empty, got {t}x{n}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite descriptor value"));
        }
        Ok(DescriptorSequence { video_id: video_id.into(), data })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(FDS_MAGIC);
        w.len_u32(self.frames(), "FDS1")?;
        w.len_u32(self.dim(), "FDS1")?;
        for v in self.data.iter() {
            w.f32(*v);
        }
        Ok(w.into_bytes())
    }

    /// Parses an `FDS1` payload; the video id is supplied by the caller.
    pub fn from_bytes(video_id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "FDS1", "FDS1")?;
        let t = r.u32()? as usize;
        let n = r.u32()? as usize;
        let count = t.checked_mul(n).ok_or(Error::DimensionOverflow("FDS1"))?;
        let values = r.f32_vec(count)?;
        r.finish()?;
        let data = Array2::from_shape_vec((t, n), values).map_err(|e| Error::Parse(e.to_string()))?;
        DescriptorSequence::new(video_id, data)
    }
}

pub fn write_sequence(seq: &DescriptorSequence, path: &Path) -> Result<()> {
    binio::write_file(path, &seq.to_bytes()?)
}

/// Reads an `FDS1` file; the video id defaults to the file stem.
pub fn read_sequence(path: &Path) -> Result<DescriptorSequence> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    DescriptorSequence::from_bytes(id, &binio::read_file(path)?)
}

/// `m` parallel time series (channel-major `m × L`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSeries {
    pub video_id: String,
    pub data: Array2<f64>,
}

impl MultiChannelSeries {
    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// Pads with trailing zero columns or truncates to exactly `length` steps.
    pub fn fit_length(&self, length: usize) -> MultiChannelSeries {
        let cur = self.len();
        let data = if cur >= length {
            if cur > length {
                log::warn!("{}: truncating series from {cur} to {length} steps", self.video_id);
            }
            self.data.slice(s![.., ..length]).to_owned()
        } else {
            let mut padded = Array2::zeros((self.channels(), length));
            padded.slice_mut(s![.., ..cur]).assign(&self.data);
            padded
        };
        MultiChannelSeries { video_id: self.video_id.clone(), data }
    }
}

/// Zero-pads every series at the end to the longest length in the corpus.
pub fn align_lengths(corpus: &[MultiChannelSeries]) -> Result<(Vec<MultiChannelSeries>, usize)> {
    let first = corpus.first().ok_or_else(|| Error::invalid("cannot align an empty corpus"))?;
    let m = first.channels();
    if let Some(bad) = corpus.iter().find(|s| s.channels() != m) {
        return Err(Error::shape(format!(
            "{} has {} channels, expected {m}",
            bad.video_id,
            bad.channels()
        )));
    }
    let l_max = corpus.iter().map(MultiChannelSeries::len).max().unwrap_or(0);
    Ok((corpus.iter().map(|s| s.fit_length(l_max)).collect(), l_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub label: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_id: Option<u32>,
}

/// The corpus index. Relative entry paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("manifest has no entries"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Parse(format!("duplicate video_id {:?}", e.video_id)));
            }
        }
        let with_split = entries.iter().filter(|e| e.split_id.is_some()).count();
        if with_split != 0 && with_split != entries.len() {
            return Err(Error::Parse("split_id must be present on all entries or none".into()));
        }
        Ok(Manifest { entries, base_dir: base_dir.into() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = binio::read_file(path)?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::new(entries, base)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(&self.entries).map_err(|e| Error::Parse(e.to_string()))?;
        json.push('\n');
        binio::write_file(path, json.as_bytes())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.video_id.clone()).collect()
    }

    /// Distinct labels, sorted lexicographically.
    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

/// One fold per video, in manifest order.
pub fn make_loocv(manifest: &Manifest) -> Result<SplitPlan> {
    let ids = manifest.ids();
    if ids.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least 2 videos"));
    }
    let folds = (0..ids.len())
        .map(|i| Fold {
            test_ids: vec![ids[i].clone()],
            train_ids: ids.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, id)| id.clone()).collect(),
        })
        .collect();
    Ok(SplitPlan { folds })
}

/// One fold per distinct `split_id` (ascending); fold `k` tests the entries
/// carrying that id and trains on everything else.
pub fn make_fixed_splits(manifest: &Manifest) -> Result<SplitPlan> {
    let mut split_ids = BTreeSet::new();
    for e in &manifest.entries {
        let k = e.split_id.ok_or_else(|| Error::invalid(format!("{} has no split_id", e.video_id)))?;
        split_ids.insert(k);
    }
    let folds = split_ids
        .into_iter()
        .map(|k| {
            let (test, train): (Vec<_>, Vec<_>) = manifest.entries.iter().partition(|e| e.split_id == Some(k));
            if train.is_empty() {
                return Err(Error::invalid(format!("empty train set for split {k}")));
            }
            Ok(Fold {
                train_ids: train.iter().map(|e| e.video_id.clone()).collect(),
                test_ids: test.iter().map(|e| e.video_id.clone()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitPlan { folds })
}

/// Parameters of the synthetic temporal-order corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
    /// When nonzero, entries get `split_id`s `1..=splits` round-robin within each class.
    #[serde(default)]
    pub splits: u32,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams { classes: 3, per_class: 20, channels: 8, min_len: 40, max_len: 80, seed: 0, splits: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub manifest: Manifest,
    pub sequences: Vec<DescriptorSequence>,
    /// Motif order of each class, indexed like `manifest.labels()`.
    pub orders: Vec<Vec<usize>>,
    /// Channels each motif is injected into.
    pub motif_channels: Vec<Vec<usize>>,
}

impl SyntheticCorpus {
    /// Writes `manifest.json` and one `<video_id>.fds` per sequence into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        for seq in &self.sequences {
            write_sequence(seq, &dir.join(format!("{}.fds", seq.video_id)))?;
        }
        let path = dir.join("manifest.json");
        self.manifest.write(&path)?;
        Ok(path)
    }
}

const MOTIF_AMPLITUDE: f64 = 2.0;
const MOTIF_MAX_WIDTH: usize = 8;
const NOISE_STD: f64 = 0.3;

/// Smallest motif count `k ≥ 3` with `k! ≥ classes`.
fn motif_count(classes: usize) -> usize {
    let mut k = 3;
    let mut fact = 6;
    while fact < classes {
        k += 1;
        fact *= k;
    }
    k
}

/// Distinct orderings of `k` motifs: all cyclic shifts first (so every motif
/// occupies every slot equally often), then remaining permutations in
/// lexicographic order.
fn motif_orders(k: usize, classes: usize) -> Vec<Vec<usize>> {
    let mut orders: Vec<Vec<usize>> = (0..k).map(|s| (0..k).map(|i| (i + s) % k).collect()).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    while orders.len() < classes {
        if !orders.contains(&perm) {
            orders.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    orders.truncate(classes);
    orders
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Generates a corpus whose classes differ only in the temporal order of a
/// shared set of pulse motifs.
///
/// Every video contains each motif exactly once, with the same amplitude
/// distribution, on top of Gaussian noise; the video is cut into one slot per
/// motif and the class fixes which motif goes into which slot. Channelwise
/// marginal statistics are therefore class-independent.
pub fn generate_synthetic_corpus(p: &SyntheticParams) -> Result<SyntheticCorpus> {
    if p.classes < 2 {
        return Err(Error::invalid("synthetic corpus needs at least 2 classes"));
    }
    if p.per_class < 2 {
        return Err(Error::invalid("synthetic corpus needs at least 2 videos per class"));
    }
    if p.channels == 0 {
        return Err(Error::invalid("synthetic corpus needs at least 1 channel"));
    }
    if p.min_len < 16 || p.max_len < p.min_len {
        return Err(Error::invalid(format!(
            "need max_len >= min_len >= 16, got min_len={} max_len={}",
            p.min_len, p.max_len
        )));
    }

    let k = motif_count(p.classes);
    let orders = motif_orders(k, p.classes);
    if orders.len() < p.classes {
        return Err(Error::invalid(format!("cannot build {} distinct motif orders", p.classes)));
    }
    let motif_channels: Vec<Vec<usize>> = (0..k)
        .map(|j| {
            if p.channels >= k {
                (0..p.channels).filter(|c| c % k == j).collect()
            } else {
                vec![j % p.channels]
            }
        })
        .collect();
    // When motifs share a channel (channels < k) the later ones flip polarity.
    let polarity = |j: usize| if p.channels < k && (j / p.channels) % 2 == 1 { -1.0 } else { 1.0 };
    let width = (p.min_len / k).clamp(2, MOTIF_MAX_WIDTH);

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    let mut entries = Vec::with_capacity(p.classes * p.per_class);
    let mut sequences = Vec::with_capacity(p.classes * p.per_class);
    for (class, order) in orders.iter().enumerate() {
        let label = format!("class{class:02}");
        for i in 0..p.per_class {
            let video_id = format!("{label}_{i:03}");
            let len = rng.random_range(p.min_len..=p.max_len);
            let mut data = Array2::<f64>::from_shape_fn((len, p.channels), |_| noise.sample(&mut rng));
            let slot = len / k;
            for (pos, &motif) in order.iter().enumerate() {
                let start = pos * slot + rng.random_range(0..=slot - width);
                let amp = MOTIF_AMPLITUDE * rng.random_range(0.8..1.2) * polarity(motif);
                for t in 0..width {
                    let bump = (std::f64::consts::PI * (t as f64 + 0.5) / width as f64).sin();
                    for &c in &motif_channels[motif] {
                        data[[start + t, c]] += amp * bump;
                    }
                }
            }
            let split_id = (p.splits > 0).then(|| (i as u32 % p.splits) + 1);
            entries.push(ManifestEntry {
                video_id: video_id.clone(),
                label: label.clone(),
                path: PathBuf::from(format!("{video_id}.fds")),
                split_id,
            });
            sequences.push(DescriptorSequence::new(video_id, data.mapv(|v| v as f32))?);
        }
    }
    Ok(SyntheticCorpus { manifest: Manifest::new(entries, ".")?, sequences, orders, motif_channels })
}
