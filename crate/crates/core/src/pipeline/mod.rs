//! End-to-end evaluation: descriptors → PCA → padded series → 1D-CNN features
//! → chi-squared SVM, run per fold of a split protocol, with reports.

mod cache;
pub mod config;
pub mod features;
mod frames;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::binio;
use crate::cnn1d::{self, LayerSpec, NetworkSpec, NetworkState};
use crate::corpus::{align_lengths, make_fixed_splits, make_loocv, read_sequence, DescriptorSequence, Fold, Manifest, SplitPlan};
use crate::error::{Error, Result};
use crate::pca::PcaModel;
use crate::svm::{self, KernelParams, SvmConfig, SvmModel};

pub use cache::{digest, KeyHasher, StageCache};
pub use config::{FlowConfig, Gamma, PcaConfig, PcaScope, PipelineConfig, SplitMode};
pub use features::{read_auxiliary, FeatureSet};
pub use frames::{frames_to_sequence, list_frames};
pub use report::{evaluate, ConfusionMatrix, FoldResult, VideoPrediction};

/// One fit call of a learned stage and the videos it consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitRecord {
    /// `pca`, `cnn`, `gamma` or `svm`.
    pub stage: &'static str,
    /// `None` for fits shared by all folds.
    pub fold: Option<usize>,
    pub video_ids: Vec<String>,
}

/// Every video of a manifest as a descriptor sequence, in manifest order.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub manifest: Manifest,
    pub labels: Vec<String>,
    pub sequences: Vec<DescriptorSequence>,
    hashes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LoadedCorpus {
    pub fn new(manifest: Manifest, sequences: Vec<DescriptorSequence>) -> Result<Self> {
        if sequences.len() != manifest.entries.len()
            || sequences.iter().zip(&manifest.entries).any(|(s, e)| s.video_id != e.video_id)
        {
            return Err(Error::invalid("sequences must follow manifest order"));
        }
        let n = sequences[0].dim();
        if let Some(bad) = sequences.iter().find(|s| s.dim() != n) {
            return Err(Error::shape(format!("{} has descriptor dimension {}, expected {n}", bad.video_id, bad.dim())));
        }
        let hashes = sequences.iter().map(|s| s.to_bytes().map(|b| digest(&b))).collect::<Result<_>>()?;
        let index = manifest.entries.iter().enumerate().map(|(i, e)| (e.video_id.clone(), i)).collect();
        Ok(LoadedCorpus { labels: manifest.labels(), manifest, sequences, hashes, index })
    }

    /// Reads every manifest entry: directories of PGM frames go through
    /// optical flow (cached under `cache_dir` when given), files are `FDS1`.
    pub fn load(manifest: Manifest, flow: &FlowConfig, cache_dir: Option<&Path>) -> Result<Self> {
        let sequences = manifest
            .entries
            .par_iter()
            .map(|e| {
                let path = manifest.resolve(e);
                if path.is_dir() {
                    sequence_from_frames(&path, &e.video_id, flow, cache_dir)
                } else {
                    DescriptorSequence::from_bytes(e.video_id.clone(), &binio::read_file(&path)?)
                }
            })
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("flow", None))?;
        LoadedCorpus::new(manifest, sequences)
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::invalid(format!("unknown video id {id:?}")))
    }

    fn label_index(&self, id: &str) -> Result<usize> {
        let label = &self.manifest.entries[self.position(id)?].label;
        Ok(self.labels.binary_search(label).expect("labels come from the manifest"))
    }
}

fn sequence_from_frames(dir: &Path, id: &str, flow: &FlowConfig, cache_dir: Option<&Path>) -> Result<DescriptorSequence> {
    let Some(cache_dir) = cache_dir else {
        return frames_to_sequence(dir, id, flow);
    };
    let mut key = KeyHasher::new("fds");
    key.f64(flow.alpha).u64(flow.iterations as u64).u64(flow.grid as u64).u64(flow.bins as u64);
    for frame in list_frames(dir)? {
        key.bytes(&binio::read_file(&frame)?);
    }
    let key = key.finish();
    let cache = StageCache::new(cache_dir.join("fds"), true);
    // ids may hold any characters, so artifacts are named by the id's digest
    let stage = digest(id.as_bytes());
    if let Some(hit) = cache.hit(&stage, &key, "fds") {
        return DescriptorSequence::from_bytes(id, &binio::read_file(&hit)?);
    }
    let seq = frames_to_sequence(dir, id, flow)?;
    cache.evict_stale(&stage, &key)?;
    crate::corpus::write_sequence(&seq, &cache.path(&stage, &key, "fds"))?;
    Ok(seq)
}

/// Result of a complete evaluation run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub split: SplitMode,
    /// Micro accuracy for leave-one-out, mean fold accuracy for fixed splits.
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub folds: Vec<FoldResult>,
    pub audit: Vec<FitRecord>,
}

impl RunOutcome {
    /// Report files as `(file name, contents)`.
    pub fn reports(&self) -> Vec<(&'static str, String)> {
        let protocol = match self.split {
            SplitMode::Loocv => "loocv",
            SplitMode::Fixed => "fixed",
        };
        vec![
            ("accuracy.csv", report::accuracy_csv(protocol, self.folds.len(), &self.confusion, self.accuracy)),
            ("folds.csv", report::folds_csv(&self.folds)),
            ("predictions.csv", report::predictions_csv(&self.folds)),
            ("confusion.csv", self.confusion.to_csv()),
            ("confusion.txt", self.confusion.to_table()),
            ("loss.csv", report::loss_csv(&self.folds)),
        ]
    }

    pub fn write_reports(&self, dir: &Path) -> Result<()> {
        for (name, text) in self.reports() {
            binio::write_file(&dir.join(name), text.as_bytes())?;
        }
        Ok(())
    }
}

/// Loads the configured corpus, evaluates it and writes reports to `paths.output`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutcome> {
    config.validate()?;
    config.check_inputs()?;
    let manifest = Manifest::read(&config.paths.manifest)?;
    let cache_dir = config.cache.then(|| config.paths.output.join("cache"));
    let corpus = LoadedCorpus::load(manifest, &config.flow, cache_dir.as_deref())?;
    let outcome = evaluate_corpus(config, &corpus)?;
    outcome.write_reports(&config.paths.output)?;
    Ok(outcome)
}

pub fn split_plan(config: &PipelineConfig, manifest: &Manifest) -> Result<SplitPlan> {
    match config.split {
        SplitMode::Loocv => make_loocv(manifest),
        SplitMode::Fixed => make_fixed_splits(manifest),
    }
}

/// Runs every fold of the configured protocol over an already loaded corpus.
/// Stage artifacts go under `paths.output/cache` when caching is on.
pub fn evaluate_corpus(config: &PipelineConfig, corpus: &LoadedCorpus) -> Result<RunOutcome> {
    let plan = split_plan(config, &corpus.manifest)?;
    let ctx = RunContext::new(config, corpus)?;
    let run = |(k, fold): (usize, &Fold)| ctx.run_fold(k, fold);
    let results: Vec<Result<(FoldResult, Vec<FitRecord>)>> = if config.parallel_folds {
        plan.folds.par_iter().enumerate().map(run).collect()
    } else {
        plan.folds.iter().enumerate().map(run).collect()
    };

    let mut folds = Vec::with_capacity(results.len());
    let mut audit = ctx.shared_audit.clone();
    for r in results {
        let (fold, records) = r?;
        folds.push(fold);
        audit.extend(records);
    }
    let pairs: Vec<(String, String)> =
        folds.iter().flat_map(|f| f.predictions.iter().map(|p| (p.truth.clone(), p.predicted.clone()))).collect();
    let (micro, confusion) = evaluate(&pairs, &corpus.labels)?;
    let accuracy = match config.split {
        SplitMode::Loocv => micro,
        SplitMode::Fixed => folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64,
    };
    Ok(RunOutcome { split: config.split, accuracy, confusion, folds, audit })
}

struct RunContext<'a> {
    config: &'a PipelineConfig,
    corpus: &'a LoadedCorpus,
    layers: Vec<LayerSpec>,
    auxiliary: Option<(BTreeMap<String, Vec<f64>>, String)>,
    /// PCA fit once for all folds (global scope), with its cache key.
    global_pca: Option<(PcaModel, String)>,
    shared_audit: Vec<FitRecord>,
}

fn stage<T>(r: Result<T>, name: &'static str, fold: Option<usize>) -> Result<T> {
    r.map_err(|e| e.in_stage(name, fold))
}

impl<'a> RunContext<'a> {
    fn new(config: &'a PipelineConfig, corpus: &'a LoadedCorpus) -> Result<Self> {
        let classes = corpus.labels.len();
        if classes < 2 {
            return Err(Error::Degenerate("the manifest needs at least 2 labels".into()));
        }
        let layers = match &config.network.architecture {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let layers = cnn1d::parse_architecture(&text)?;
                if !matches!(layers.last(), Some(LayerSpec::SoftmaxOutput { classes: k }) if *k == classes) {
                    return Err(Error::invalid(format!("architecture must end in softmax {classes}")));
                }
                layers
            }
            None => cnn1d::default_architecture(classes),
        };
        let auxiliary = match &config.svm.auxiliary_features {
            Some(path) => {
                let bytes = binio::read_file(path)?;
                let map = read_auxiliary(path)?;
                for id in corpus.manifest.ids() {
                    if !map.contains_key(&id) {
                        return Err(Error::invalid(format!("no auxiliary features for {id}")));
                    }
                }
                Some((map, digest(&bytes)))
            }
            None => None,
        };
        let mut ctx = RunContext { config, corpus, layers, auxiliary, global_pca: None, shared_audit: Vec::new() };
        if config.pca.scope == PcaScope::Global {
            let all: Vec<usize> = (0..corpus.sequences.len()).collect();
            let (model, key, record) = stage(ctx.fit_pca(&all, None), "pca", None)?;
            ctx.global_pca = Some((model, key));
            ctx.shared_audit.push(record);
        }
        Ok(ctx)
    }

    fn fold_cache(&self, fold: usize) -> StageCache {
        StageCache::new(self.config.paths.output.join("cache").join(format!("fold-{fold:03}")), self.config.cache)
    }

    fn ids(&self, rows: &[usize]) -> Vec<String> {
        rows.iter().map(|&i| self.corpus.sequences[i].video_id.clone()).collect()
    }

    fn fit_pca(&self, rows: &[usize], fold: Option<usize>) -> Result<(PcaModel, String, FitRecord)> {
        let mut key = KeyHasher::new("pca");
        key.f64(self.config.pca.pov_threshold);
        for &i in rows {
            key.str(&self.corpus.sequences[i].video_id).str(&self.corpus.hashes[i]);
        }
        let key = key.finish();
        let record = FitRecord { stage: "pca", fold, video_ids: self.ids(rows) };
        let cache = match fold {
            Some(k) => self.fold_cache(k),
            None => StageCache::new(self.config.paths.output.join("cache"), self.config.cache),
        };
        if let Some(hit) = cache.hit("pca", &key, "pca1") {
            return Ok((PcaModel::load(&hit)?, key, record));
        }
        let model = PcaModel::fit_sequences(rows.iter().map(|&i| &self.corpus.sequences[i]), self.config.pca.pov_threshold)?;
        if cache.enabled() {
            cache.evict_stale("pca", &key)?;
            model.save(&cache.path("pca", &key, "pca1"))?;
        }
        Ok((model, key, record))
    }

    fn run_fold(&self, k: usize, fold: &Fold) -> Result<(FoldResult, Vec<FitRecord>)> {
        let f = Some(k);
        let corpus = self.corpus;
        let train: Vec<usize> = fold.train_ids.iter().map(|id| corpus.position(id)).collect::<Result<_>>()?;
        let test: Vec<usize> = fold.test_ids.iter().map(|id| corpus.position(id)).collect::<Result<_>>()?;
        let cache = self.fold_cache(k);
        let mut audit = Vec::new();

        let (pca, pca_key) = match &self.global_pca {
            Some((model, key)) => (model.clone(), key.clone()),
            None => {
                let (model, key, record) = stage(self.fit_pca(&train, f), "pca", f)?;
                audit.push(record);
                (model, key)
            }
        };

        // every video of the corpus fixes the padded length
        let projected = stage(corpus.sequences.iter().map(|s| pca.transform(s)).collect::<Result<Vec<_>>>(), "project", f)?;
        let (series, length) = stage(align_lengths(&projected), "project", f)?;

        let spec = stage(NetworkSpec::new(pca.retained(), length, self.layers.clone()), "cnn", f)?;
        let train_config = cnn1d::TrainConfig { seed: self.config.seed ^ k as u64, ..self.config.train.clone() };
        let labels: Vec<usize> = train.iter().map(|&i| corpus.label_index(&corpus.sequences[i].video_id)).collect::<Result<_>>()?;
        let mut cnn_key = KeyHasher::new("cnn");
        cnn_key.str(&pca_key).str(&spec.to_text()).u64(train_config.seed);
        cnn_key.str(&serde_json::to_string(&train_config).expect("config serializes"));
        for (&i, &y) in train.iter().zip(&labels) {
            cnn_key.str(&corpus.sequences[i].video_id).u64(y as u64);
        }
        let cnn_key = cnn_key.finish();
        audit.push(FitRecord { stage: "cnn", fold: f, video_ids: self.ids(&train) });
        let (state, loss_history) = stage(self.train_network(&cache, &cnn_key, &spec, &train, &labels, &series, &train_config), "cnn", f)?;

        let features = |rows: &[usize]| -> Result<Vec<Vec<f64>>> {
            rows.iter()
                .map(|&i| {
                    let mut feat = cnn1d::extract_features(&spec, &state, &series[i].data)?;
                    feat.iter_mut().for_each(|x| *x = *x as f32 as f64);
                    match &self.auxiliary {
                        Some((map, _)) => svm::concat_features(&feat, &map[&corpus.sequences[i].video_id]),
                        None => Ok(feat),
                    }
                })
                .collect()
        };
        let train_features = stage(features(&train), "extract", f)?;
        let test_features = stage(features(&test), "extract", f)?;

        let gamma = match self.config.svm.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Auto => {
                audit.push(FitRecord { stage: "gamma", fold: f, video_ids: self.ids(&train) });
                stage(svm::default_gamma(&train_features), "gamma", f)?
            }
        };
        let train_labels: Vec<String> = labels.iter().map(|&y| corpus.labels[y].clone()).collect();
        let mut svm_key = KeyHasher::new("svm");
        svm_key.str(&cnn_key).f64(gamma).f64(self.config.svm.c_box).f64(self.config.svm.tol);
        svm_key.str(self.auxiliary.as_ref().map_or("", |(_, h)| h.as_str()));
        let svm_key = svm_key.finish();
        audit.push(FitRecord { stage: "svm", fold: f, video_ids: self.ids(&train) });
        let model = stage(self.fit_svm(&cache, &svm_key, &train_features, &train_labels, gamma), "svm", f)?;

        let predicted = stage(model.predict_batch(&test_features), "predict", f)?;
        let predictions: Vec<VideoPrediction> = test
            .iter()
            .zip(predicted)
            .map(|(&i, p)| VideoPrediction {
                video_id: corpus.sequences[i].video_id.clone(),
                truth: corpus.manifest.entries[i].label.clone(),
                predicted: p.label,
            })
            .collect();
        let correct = predictions.iter().filter(|p| p.truth == p.predicted).count();
        let result = FoldResult {
            fold: k,
            train_size: train.len(),
            accuracy: correct as f64 / predictions.len() as f64,
            predictions,
            pca_channels: pca.retained(),
            padded_length: length,
            gamma,
            loss_history,
        };
        Ok((result, audit))
    }

    #[allow(clippy::too_many_arguments)]
    fn train_network(
        &self,
        cache: &StageCache,
        key: &str,
        spec: &NetworkSpec,
        train: &[usize],
        labels: &[usize],
        series: &[crate::corpus::MultiChannelSeries],
        config: &cnn1d::TrainConfig,
    ) -> Result<(NetworkState, Vec<f64>)> {
        if let (Some(model), Some(loss)) = (cache.hit("cnn", key, "cnn1"), cache.hit("cnn", key, "loss")) {
            let (cached_spec, state) = NetworkState::load(&model)?;
            if &cached_spec == spec {
                return Ok((state, read_loss(&loss)?));
            }
        }
        let samples: Vec<(&Array2<f64>, usize)> = train.iter().zip(labels).map(|(&i, &y)| (&series[i].data, y)).collect();
        let outcome = cnn1d::train(spec, &samples, config)?;
        let mut state = outcome.state;
        state.quantize_f32();
        if cache.enabled() {
            cache.evict_stale("cnn", key)?;
            state.save(spec, &cache.path("cnn", key, "cnn1"))?;
            let text: String = outcome.loss_history.iter().map(|l| format!("{l}\n")).collect();
            binio::write_file(&cache.path("cnn", key, "loss"), text.as_bytes())?;
        }
        Ok((state, outcome.loss_history))
    }

    fn fit_svm(&self, cache: &StageCache, key: &str, features: &[Vec<f64>], labels: &[String], gamma: f64) -> Result<SvmModel> {
        if let Some(hit) = cache.hit("svm", key, "svm1") {
            return SvmModel::load(&hit);
        }
        let config = SvmConfig { c_box: self.config.svm.c_box, tol: self.config.svm.tol };
        let model = SvmModel::fit(features, labels, KernelParams::new(gamma)?, config)?;
        if cache.enabled() {
            cache.evict_stale("svm", key)?;
            model.save(&cache.path("svm", key, "svm1"))?;
        }
        Ok(model)
    }
}

fn read_loss(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().map(|l| l.parse().map_err(|_| Error::Parse(format!("{}: bad loss value {l:?}", path.display())))).collect()
}

/// Reads a manifest whose entries are `FDS1` files (no optical flow).
pub fn read_fds_corpus(manifest_path: &Path) -> Result<LoadedCorpus> {
    let manifest = Manifest::read(manifest_path)?;
    let sequences = manifest
        .entries
        .iter()
        .map(|e| {
            let seq = read_sequence(&manifest.resolve(e))?;
            DescriptorSequence::new(e.video_id.clone(), seq.data().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    LoadedCorpus::new(manifest, sequences)
}
