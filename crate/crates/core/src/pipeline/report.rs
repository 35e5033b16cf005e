use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::binio;
use crate::error::{Error, Result};

/// Rows are true labels, columns predicted labels, both in `labels` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix { labels, counts: Array2::zeros((k, k)) }
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("unknown label {label:?}")))
    }

    pub fn record(&mut self, truth: &str, predicted: &str) -> Result<()> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[[i, j]] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts.diag().sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("true\\predicted").chain(self.labels.iter().map(String::as_str));
        w.write_record(header).expect("in-memory write");
        for (label, row) in self.labels.iter().zip(self.counts.rows()) {
            let cells = std::iter::once(label.clone()).chain(row.iter().map(u64::to_string));
            w.write_record(cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Right-aligned plain-text table.
    pub fn to_table(&self) -> String {
        let corner = "true \\ pred";
        let width = self
            .labels
            .iter()
            .map(|l| l.chars().count())
            .chain(self.counts.iter().map(|c| c.to_string().len()))
            .chain([corner.len()])
            .max()
            .unwrap_or(1);
        let mut out = format!("{corner:>width$}");
        for l in &self.labels {
            write!(out, "  {l:>width$}").unwrap();
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(self.counts.rows()) {
            write!(out, "{label:>width$}").unwrap();
            for c in row {
                write!(out, "  {c:>width$}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy and confusion matrix of `(true, predicted)` pairs over a declared label set.
pub fn evaluate(predictions: &[(String, String)], labels: &[String]) -> Result<(f64, ConfusionMatrix)> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to evaluate"));
    }
    let mut cm = ConfusionMatrix::new(labels.to_vec());
    for (t, p) in predictions {
        cm.record(t, p)?;
    }
    let correct = predictions.iter().filter(|(t, p)| t == p).count();
    Ok((correct as f64 / predictions.len() as f64, cm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub video_id: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub predictions: Vec<VideoPrediction>,
    pub accuracy: f64,
    pub pca_channels: usize,
    pub padded_length: usize,
    pub gamma: f64,
    pub loss_history: Vec<f64>,
}

impl FoldResult {
    pub fn correct(&self) -> usize {
        self.predictions.iter().filter(|p| p.truth == p.predicted).count()
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn folds_csv(folds: &[FoldResult]) -> String {
    csv_string(
        &["fold", "train_size", "test_size", "correct", "accuracy", "pca_channels", "padded_length", "gamma"],
        folds.iter().map(|f| {
            vec![
                f.fold.to_string(),
                f.train_size.to_string(),
                f.predictions.len().to_string(),
                f.correct().to_string(),
                f.accuracy.to_string(),
                f.pca_channels.to_string(),
                f.padded_length.to_string(),
                f.gamma.to_string(),
            ]
        }),
    )
}

pub fn predictions_csv(folds: &[FoldResult]) -> String {
    csv_string(
        &["fold", "video_id", "true_label", "predicted_label"],
        folds.iter().flat_map(|f| {
            f.predictions.iter().map(move |p| vec![f.fold.to_string(), p.video_id.clone(), p.truth.clone(), p.predicted.clone()])
        }),
    )
}

pub fn loss_csv(folds: &[FoldResult]) -> String {
    csv_string(
        &["fold", "epoch", "loss"],
        folds.iter().flat_map(|f| {
            f.loss_history.iter().enumerate().map(move |(e, l)| vec![f.fold.to_string(), (e + 1).to_string(), l.to_string()])
        }),
    )
}

pub fn accuracy_csv(protocol: &str, folds: usize, cm: &ConfusionMatrix, accuracy: f64) -> String {
    csv_string(
        &["protocol", "folds", "videos", "correct", "accuracy"],
        [vec![protocol.to_string(), folds.to_string(), cm.total().to_string(), cm.trace().to_string(), accuracy.to_string()]],
    )
}

/// Reads `fold,video_id,true_label,predicted_label` rows (the fold column is optional).
pub fn read_predictions_csv(path: &Path) -> Result<Vec<VideoPrediction>> {
    let bytes = binio::read_file(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let headers = r.headers().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("{}: missing column {name}", path.display())))
    };
    let (id, t, p) = (col("video_id")?, col("true_label")?, col("predicted_label")?);
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            Ok(VideoPrediction { video_id: rec[id].to_string(), truth: rec[t].to_string(), predicted: rec[p].to_string() })
        })
        .collect()
}
