//! Little-endian primitives shared by the OSF1/OSL1/OSM1 file formats.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) struct Reader<R> {
    inner: R,
    what: &'static str,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R, what: &'static str) -> Self {
        Self { inner, what }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated(format!("{} ended early", self.what)),
            _ => Error::io(format!("reading {}", self.what), e),
        })
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        let mut got = [0u8; 4];
        self.fill(&mut got)?;
        if &got != magic {
            return Err(Error::Format(format!(
                "{}: expected magic {:?}, found {:?}",
                self.what,
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&got)
            )));
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format(format!(
                "{}: unsupported version {v} (expected {version})",
                self.what
            )));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; n * 4];
        self.fill(&mut raw)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut raw = vec![0u8; n * 8];
        self.fill(&mut raw)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    /// Fails if any bytes remain.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format(format!("{}: trailing bytes", self.what))),
            Err(e) => Err(Error::io(format!("reading {}", self.what), e)),
        }
    }
}

pub(crate) struct Writer<W> {
    inner: W,
    what: &'static str,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W, what: &'static str) -> Self {
        Self { inner, what }
    }

    fn put(&mut self, b: &[u8]) -> Result<()> {
        self.inner
            .write_all(b)
            .map_err(|e| Error::io(format!("writing {}", self.what), e))
    }

    pub fn header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        self.put(magic)?;
        self.u32(version)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn count(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n)
            .map_err(|_| Error::Format(format!("{}: count {n} exceeds u32", self.what)))?;
        self.u32(v)
    }

    /// Stores values as `f32`; values outside `f32` range are rejected.
    pub fn f32s(&mut self, values: &[f64]) -> Result<()> {
        let mut raw = Vec::with_capacity(values.len() * 4);
        for &v in values {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("{} value {v}", self.what)));
            }
            raw.extend_from_slice(&f.to_le_bytes());
        }
        self.put(&raw)
    }

    pub fn f64s(&mut self, values: &[f64]) -> Result<()> {
        let mut raw = Vec::with_capacity(values.len() * 8);
        for v in values {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        self.put(&raw)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner
            .flush()
            .map_err(|e| Error::io(format!("flushing {}", self.what), e))?;
        Ok(self.inner)
    }
}
