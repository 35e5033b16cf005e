use std::collections::BTreeMap;
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};

/// Labeled feature vectors, one per video. Stored as CSV with columns
/// `video_id,label,f0,f1,…`; values use shortest round-trip formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub video_ids: Vec<String>,
    pub labels: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn to_csv(&self) -> String {
        let dim = self.features.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = ["video_id".to_string(), "label".to_string()].into_iter().chain((0..dim).map(|i| format!("f{i}"))).collect();
        w.write_record(&header).expect("in-memory write");
        for ((id, label), f) in self.video_ids.iter().zip(&self.labels).zip(&self.features) {
            let row: Vec<String> = [id.clone(), label.clone()].into_iter().chain(f.iter().map(f64::to_string)).collect();
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        binio::write_file(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = binio::read_file(path)?;
        let bad = |msg: String| Error::Parse(format!("{}: {msg}", path.display()));
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let width = r.headers().map_err(|e| bad(e.to_string()))?.len();
        if width < 3 {
            return Err(bad("expected video_id,label and at least one feature column".into()));
        }
        let mut set = FeatureSet { video_ids: Vec::new(), labels: Vec::new(), features: Vec::new() };
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            set.video_ids.push(rec[0].to_string());
            set.labels.push(rec[1].to_string());
            let f = rec.iter().skip(2).map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?}")))).collect::<Result<Vec<_>>>()?;
            set.features.push(f);
        }
        Ok(set)
    }
}

/// Auxiliary descriptors: a JSON object mapping video id to a numeric array.
pub fn read_auxiliary(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let bytes = binio::read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
