//! Little-endian helpers shared by the `FDS1`, `PCA1`, `CNN1` and `SVM1` formats.

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        Writer { buf: magic.to_vec() }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_u32(&mut self, v: usize, what: &'static str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::DimensionOverflow(what))?;
        self.u32(v);
        Ok(())
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks the magic and positions the cursor after it.
    pub fn new(data: &'a [u8], magic: &'static str, what: &'static str) -> Result<Self> {
        if data.len() < 4 {
            return Err(Error::Truncated(what));
        }
        if &data[..4] != magic.as_bytes() {
            return Err(Error::BadMagic { what, expected: magic });
        }
        Ok(Reader { data, pos: 4, what })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::DimensionOverflow(self.what))?;
        if end > self.data.len() {
            return Err(Error::Truncated(self.what));
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    /// Fails early when `count` elements of `elem` bytes cannot fit in the remaining payload.
    pub fn expect_payload(&self, count: usize, elem: usize) -> Result<()> {
        let need = count.checked_mul(elem).ok_or(Error::DimensionOverflow(self.what))?;
        if need > self.data.len() - self.pos {
            return Err(Error::Truncated(self.what));
        }
        Ok(())
    }

    pub fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        self.expect_payload(count, 4)?;
        (0..count).map(|_| self.f32()).collect()
    }

    pub fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        self.expect_payload(count, 8)?;
        (0..count).map(|_| self.f64()).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Parse(format!("{}: trailing bytes", self.what)));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
