use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cnn1d::TrainConfig;
use crate::error::{Error, Result};
use crate::{flowfield, pca, svm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub grid: usize,
    pub bins: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            alpha: flowfield::DEFAULT_ALPHA,
            iterations: flowfield::DEFAULT_ITERATIONS,
            grid: flowfield::DEFAULT_GRID,
            bins: flowfield::DEFAULT_BINS,
        }
    }
}

/// Which videos the PCA basis is fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaScope {
    /// Training videos of each fold only.
    PerFold,
    /// Every video in the manifest, once. Leaks test frames into the basis.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub pov_threshold: f64,
    pub scope: PcaScope,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { pov_threshold: pca::DEFAULT_POV, scope: PcaScope::PerFold }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Architecture listing; `None` uses the built-in default.
    pub architecture: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Auto,
    Fixed(f64),
}

impl Serialize for Gamma {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Auto => s.serialize_str("auto"),
            Gamma::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(s) if s == "auto" => Ok(Gamma::Auto),
            Value::String(s) => s.parse().map(Gamma::Fixed).map_err(|_| serde::de::Error::custom(format!("gamma must be \"auto\" or a number, got {s:?}"))),
            Value::Number(n) => Ok(Gamma::Fixed(n.as_f64().unwrap_or(f64::NAN))),
            other => Err(serde::de::Error::custom(format!("gamma must be \"auto\" or a number, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSettings {
    pub c_box: f64,
    pub gamma: Gamma,
    pub tol: f64,
    /// JSON object mapping video id to a nonnegative vector appended to the learned features.
    pub auxiliary_features: Option<PathBuf>,
}

impl Default for SvmSettings {
    fn default() -> Self {
        SvmSettings { c_box: svm::DEFAULT_C_BOX, gamma: Gamma::Auto, tol: svm::DEFAULT_TOL, auxiliary_features: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Loocv,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { manifest: PathBuf::from("manifest.json"), output: PathBuf::from("out") }
    }
}

/// Complete configuration of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub flow: FlowConfig,
    pub pca: PcaConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub svm: SvmSettings,
    pub split: SplitMode,
    pub paths: Paths,
    /// Fold `k` trains its network with seed `seed ^ k`.
    pub seed: u64,
    pub parallel_folds: bool,
    /// Reuse stage artifacts under `<output>/cache` when their inputs are unchanged.
    pub cache: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            flow: FlowConfig::default(),
            pca: PcaConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            svm: SvmSettings::default(),
            split: SplitMode::Loocv,
            paths: Paths::default(),
            seed: 0,
            parallel_folds: true,
            cache: true,
        }
    }
}

impl PipelineConfig {
    /// Parses a JSON document, then applies `(dotted.name, value)` overrides.
    ///
    /// Override values are read as JSON when they parse as JSON and as plain
    /// strings otherwise, so `--train.epochs 30` and `--paths.output runs/a`
    /// both work.
    pub fn from_json(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        if !doc.is_object() {
            return Err(Error::Parse("config must be a JSON object".into()));
        }
        for (key, raw) in overrides {
            apply_override(&mut doc, key, raw)?;
        }
        let config: PipelineConfig = serde_json::from_value(doc).map_err(|e| Error::invalid(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::invalid(format!("config {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text, overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pca.pov_threshold > 0.0 && self.pca.pov_threshold <= 1.0) {
            return Err(Error::invalid(format!("pca.pov_threshold must be in (0, 1], got {}", self.pca.pov_threshold)));
        }
        if !(self.flow.alpha > 0.0) || self.flow.iterations == 0 || self.flow.grid == 0 || self.flow.bins < 2 {
            return Err(Error::invalid("flow needs alpha > 0, iterations >= 1, grid >= 1, bins >= 2"));
        }
        self.train.validate()?;
        if !(self.svm.c_box > 0.0) || !(self.svm.tol > 0.0) {
            return Err(Error::invalid("svm.c_box and svm.tol must be positive"));
        }
        if let Gamma::Fixed(g) = self.svm.gamma {
            svm::KernelParams::new(g)?;
        }
        Ok(())
    }

    /// Checks that every referenced input file exists.
    pub fn check_inputs(&self) -> Result<()> {
        let files = [Some(&self.paths.manifest), self.network.architecture.as_ref(), self.svm.auxiliary_features.as_ref()];
        for path in files.into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::invalid(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(format!("bad override key {key:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| Error::invalid(format!("override {key:?} descends into a non-object")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| Error::invalid(format!("override {key:?} descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_document_gives_defaults() {
        let c = PipelineConfig::from_json("{}", &[]).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.pca.scope, PcaScope::PerFold);
        assert_eq!(c.svm.gamma, Gamma::Auto);
    }

    #[test]
    fn overrides_use_dotted_names() {
        let c = PipelineConfig::from_json(
            r#"{"train": {"epochs": 5}, "svm": {"gamma": 0.5}}"#,
            &[ov("train.epochs", "7"), ov("paths.output", "runs/a"), ov("split", "fixed"), ov("svm.gamma", "auto"), ov("flow.grid", "2")],
        )
        .unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.paths.output, PathBuf::from("runs/a"));
        assert_eq!(c.split, SplitMode::Fixed);
        assert_eq!(c.svm.gamma, Gamma::Auto);
        assert_eq!(c.flow.grid, 2);
        let c = PipelineConfig::from_json("{}", &[ov("svm.gamma", "0.25")]).unwrap();
        assert_eq!(c.svm.gamma, Gamma::Fixed(0.25));
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = PipelineConfig::default();
        c.svm.gamma = Gamma::Fixed(2.0);
        c.network.architecture = Some("net.txt".into());
        assert_eq!(PipelineConfig::from_json(&c.to_json(), &[]).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        for (k, v) in [("pca.pov_threshold", "0"), ("pca.pov_threshold", "1.5"), ("train.nope", "1"), ("svm.gamma", "-1"), ("svm.gamma", "fast"), ("train.seed", "3")] {
            let err = PipelineConfig::from_json("{}", &[ov(k, v)]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{k}={v}: {err}");
        }
        assert!(PipelineConfig::from_json("[1]", &[]).is_err());
        assert!(PipelineConfig::from_json("{}", &[ov("seed.x", "1")]).is_err());
    }
}
