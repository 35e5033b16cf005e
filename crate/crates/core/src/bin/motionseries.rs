use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use motionseries::cnn1d::{self, NetworkSpec, NetworkState, TrainConfig};
use motionseries::corpus::{self, DescriptorSequence, Manifest, ManifestEntry, MultiChannelSeries, SyntheticParams};
use motionseries::pca::{self, PcaModel};
use motionseries::pipeline::{self, report, FeatureSet, FlowConfig, Gamma, PipelineConfig};
use motionseries::svm::{self, KernelParams, SvmConfig, SvmModel};
use motionseries::{Error, Result};

#[derive(Parser)]
#[command(name = "motionseries", version, about = "Optical-flow time series classification with a 1D-CNN and a chi-squared SVM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Describe the optical flow of a directory of PGM frames as an FDS1 sequence
    Flow(FlowArgs),
    /// Fit PCA on every frame of the manifest's sequences
    PcaFit(PcaFitArgs),
    /// Project a manifest's sequences onto a PCA basis
    Project(ProjectArgs),
    /// Train the 1D-CNN on projected sequences
    Train(TrainArgs),
    /// Extract penultimate-layer features with a trained network
    Extract(ExtractArgs),
    /// Fit the one-vs-rest chi-squared SVM on a feature file
    SvmFit(SvmFitArgs),
    /// Classify a feature file
    Predict(PredictArgs),
    /// Run the full pipeline under a split protocol and write reports
    Run(RunArgs),
    /// Generate a synthetic temporal-order corpus
    Synth(SynthArgs),
    /// Score a predictions file: accuracy and confusion matrix
    Eval(EvalArgs),
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = motionseries::flowfield::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = motionseries::flowfield::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = motionseries::flowfield::DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = motionseries::flowfield::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Args)]
struct PcaFitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = pca::DEFAULT_POV)]
    pov: f64,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    pca: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Receives one `<video_id>.fds` per video (time × channels) and a manifest.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest of projected sequences
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Architecture listing; defaults to the built-in network
    #[arg(long)]
    architecture: Option<PathBuf>,
    /// Input length; defaults to the longest sequence
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Per-epoch loss CSV
    #[arg(long)]
    loss: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    /// Manifest of projected sequences
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SvmFitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = svm::DEFAULT_C_BOX)]
    c_box: f64,
    /// `auto` or a positive number
    #[arg(long, default_value = "auto")]
    gamma: String,
    #[arg(long, default_value_t = svm::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--<dotted.name> <value>` or `--<dotted.name>=<value>`, e.g. `--train.epochs 30`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 40)]
    min_len: usize,
    #[arg(long, default_value_t = 80)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assign split ids 1..=N for the fixed-split protocol
    #[arg(long, default_value_t = 0)]
    splits: u32,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Writes confusion.csv and confusion.txt here
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag.strip_prefix("--").ok_or_else(|| Error::InvalidArgument(format!("expected --<dotted.name>, got {flag:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| Error::InvalidArgument(format!("--{key} needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Projected sequences are stored time-major; the network wants channel-major.
fn read_series(manifest_path: &Path) -> Result<(Manifest, Vec<MultiChannelSeries>)> {
    let corpus = pipeline::read_fds_corpus(manifest_path)?;
    let series = corpus
        .sequences
        .iter()
        .map(|s| MultiChannelSeries { video_id: s.video_id.clone(), data: s.data().t().mapv(f64::from) })
        .collect();
    Ok((corpus.manifest, series))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Flow(a) => {
            let flow = FlowConfig { alpha: a.alpha, iterations: a.iterations, grid: a.grid, bins: a.bins };
            let id = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let seq = pipeline::frames_to_sequence(&a.frames, &id, &flow)?;
            corpus::write_sequence(&seq, &a.out)?;
            println!("{}: {} descriptors of length {}", a.out.display(), seq.frames(), seq.dim());
        }
        Command::PcaFit(a) => {
            let corpus = pipeline::read_fds_corpus(&a.manifest)?;
            let model = PcaModel::fit_sequences(&corpus.sequences, a.pov)?;
            model.save(&a.out)?;
            println!("retained {} of {} components (PoV {:.4})", model.retained(), model.input_dim(), model.pov_achieved());
        }
        Command::Project(a) => {
            let model = PcaModel::load(&a.pca)?;
            let corpus = pipeline::read_fds_corpus(&a.manifest)?;
            let mut entries = Vec::new();
            for (seq, entry) in corpus.sequences.iter().zip(&corpus.manifest.entries) {
                let series = model.transform(seq)?;
                let projected = DescriptorSequence::new(seq.video_id.clone(), series.data.t().mapv(|x| x as f32))?;
                let file = PathBuf::from(format!("{}.fds", seq.video_id));
                corpus::write_sequence(&projected, &a.out_dir.join(&file))?;
                entries.push(ManifestEntry { path: file, ..entry.clone() });
            }
            Manifest::new(entries, &a.out_dir)?.write(&a.out_dir.join("manifest.json"))?;
            println!("projected {} videos onto {} channels", corpus.sequences.len(), model.retained());
        }
        Command::Train(a) => {
            let (manifest, series) = read_series(&a.manifest)?;
            let labels = manifest.labels();
            let (aligned, longest) = corpus::align_lengths(&series)?;
            let length = a.length.unwrap_or(longest);
            let layers = match &a.architecture {
                Some(p) => cnn1d::parse_architecture(&std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?)?,
                None => cnn1d::default_architecture(labels.len()),
            };
            let spec = NetworkSpec::new(aligned[0].channels(), length, layers)?;
            let d = TrainConfig::default();
            let config = TrainConfig {
                learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
                momentum: a.momentum.unwrap_or(d.momentum),
                epochs: a.epochs.unwrap_or(d.epochs),
                batch_size: a.batch_size.unwrap_or(d.batch_size),
                weight_decay: a.weight_decay.unwrap_or(d.weight_decay),
                seed: a.seed,
            };
            let inputs: Vec<MultiChannelSeries> = aligned.iter().map(|s| s.fit_length(length)).collect();
            let ys: Vec<usize> = manifest.entries.iter().map(|e| labels.binary_search(&e.label).expect("label from manifest")).collect();
            let samples: Vec<(&Array2<f64>, usize)> = inputs.iter().map(|s| &s.data).zip(ys).collect();
            let outcome = cnn1d::train(&spec, &samples, &config)?;
            outcome.state.save(&spec, &a.out)?;
            if let Some(path) = &a.loss {
                let text: String = std::iter::once("epoch,loss\n".to_string())
                    .chain(outcome.loss_history.iter().enumerate().map(|(e, l)| format!("{},{l}\n", e + 1)))
                    .collect();
                std::fs::write(path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            }
            println!("final loss {}", outcome.loss_history.last().copied().unwrap_or(f64::NAN));
        }
        Command::Extract(a) => {
            let (spec, state) = NetworkState::load(&a.model)?;
            let (manifest, series) = read_series(&a.manifest)?;
            let features = series
                .iter()
                .map(|s| {
                    let f = cnn1d::extract_features(&spec, &state, &s.fit_length(spec.input_length()).data)?;
                    Ok(f.into_iter().map(|x| x as f32 as f64).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let set = FeatureSet {
                video_ids: manifest.ids(),
                labels: manifest.entries.iter().map(|e| e.label.clone()).collect(),
                features,
            };
            set.write(&a.out)?;
            println!("{} feature vectors of length {}", set.features.len(), spec.feature_len());
        }
        Command::SvmFit(a) => {
            let set = FeatureSet::read(&a.features)?;
            let gamma = match a.gamma.as_str() {
                "auto" => Gamma::Auto,
                g => Gamma::Fixed(g.parse().map_err(|_| Error::InvalidArgument(format!("gamma must be auto or a number, got {g:?}")))?),
            };
            let gamma = match gamma {
                Gamma::Auto => svm::default_gamma(&set.features)?,
                Gamma::Fixed(g) => g,
            };
            let model = SvmModel::fit(&set.features, &set.labels, KernelParams::new(gamma)?, SvmConfig { c_box: a.c_box, tol: a.tol })?;
            model.save(&a.out)?;
            println!("fit {} one-vs-rest machines, gamma {gamma}", model.labels.len());
        }
        Command::Predict(a) => {
            let model = SvmModel::load(&a.model)?;
            let set = FeatureSet::read(&a.features)?;
            let predictions = model.predict_batch(&set.features)?;
            let fold = report::FoldResult {
                fold: 0,
                train_size: 0,
                predictions: set
                    .video_ids
                    .iter()
                    .zip(&set.labels)
                    .zip(predictions)
                    .map(|((id, t), p)| pipeline::VideoPrediction { video_id: id.clone(), truth: t.clone(), predicted: p.label })
                    .collect(),
                accuracy: 0.0,
                pca_channels: 0,
                padded_length: 0,
                gamma: model.kernel.gamma,
                loss_history: Vec::new(),
            };
            std::fs::write(&a.out, report::predictions_csv(&[fold])).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
            println!("wrote {}", a.out.display());
        }
        Command::Run(a) => {
            let overrides = parse_overrides(&a.overrides)?;
            let config = match &a.config {
                Some(path) => PipelineConfig::load(path, &overrides)?,
                None => PipelineConfig::from_json("{}", &overrides)?,
            };
            let outcome = pipeline::run_pipeline(&config)?;
            print!("{}", outcome.confusion.to_table());
            println!("accuracy {:.4} over {} folds; reports in {}", outcome.accuracy, outcome.folds.len(), config.paths.output.display());
        }
        Command::Synth(a) => {
            let params = SyntheticParams {
                classes: a.classes,
                per_class: a.per_class,
                channels: a.channels,
                min_len: a.min_len,
                max_len: a.max_len,
                seed: a.seed,
                splits: a.splits,
            };
            let corpus = corpus::generate_synthetic_corpus(&params)?;
            let manifest = corpus.write_to(&a.out)?;
            println!("{} videos; manifest {}", corpus.sequences.len(), manifest.display());
        }
        Command::Eval(a) => {
            let preds = report::read_predictions_csv(&a.predictions)?;
            let mut labels: Vec<String> = preds.iter().flat_map(|p| [p.truth.clone(), p.predicted.clone()]).collect();
            labels.sort();
            labels.dedup();
            let pairs: Vec<(String, String)> = preds.into_iter().map(|p| (p.truth, p.predicted)).collect();
            let (accuracy, cm) = pipeline::evaluate(&pairs, &labels)?;
            if let Some(dir) = &a.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                for (name, text) in [("confusion.csv", cm.to_csv()), ("confusion.txt", cm.to_table())] {
                    let path = dir.join(name);
                    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
                }
            }
            print!("{}", cm.to_table());
            println!("accuracy {accuracy:.4} ({} of {})", cm.trace(), cm.total());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
