//! Content-addressed stage artifacts.
//!
//! Every artifact is stored as `<stage>-<key>.<ext>`, where the key hashes all
//! inputs of the stage including the key of the stage upstream of it. A change
//! anywhere upstream therefore changes every downstream key; stale artifacts of
//! the same stage are removed when a new one is written.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Default)]
pub struct KeyHasher(Sha256);

impl KeyHasher {
    pub fn new(stage: &str) -> Self {
        let mut h = KeyHasher(Sha256::new());
        h.str(stage);
        h
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    /// First 128 bits as lowercase hex.
    pub fn finish(&self) -> String {
        self.0.clone().finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn digest(bytes: &[u8]) -> String {
    let mut h = KeyHasher::default();
    h.bytes(bytes);
    h.finish()
}

pub struct StageCache {
    dir: PathBuf,
    enabled: bool,
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>, enabled: bool) -> Self {
        StageCache { dir: dir.into(), enabled }
    }

    pub fn path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{key}.{ext}"))
    }

    /// Path of an existing artifact, if caching is on.
    pub fn hit(&self, stage: &str, key: &str, ext: &str) -> Option<PathBuf> {
        let p = self.path(stage, key, ext);
        (self.enabled && p.is_file()).then_some(p)
    }

    /// Removes artifacts of `stage` whose key differs from `key`.
    pub fn evict_stale(&self, stage: &str, key: &str) -> Result<()> {
        if !self.enabled || !self.dir.is_dir() {
            return Ok(());
        }
        let prefix = format!("{stage}-");
        for entry in std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))? {
            let path = entry.map_err(|e| Error::io(&self.dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(rest) = name.strip_prefix(&prefix) {
                if !rest.starts_with(key) {
                    std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        Ok(())
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
