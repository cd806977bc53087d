//! Dense row-major class embeddings and their binary dump format.
//!
//! The dump is little-endian: the 5-byte magic `KSMP1`, `n` and `d` as `u64`,
//! then `n * d` `f64` values in row-major order.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"KSMP1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::NoClasses);
        }
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(EmbeddingMatrix { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        Self::from_vec(n, d, rows.concat())
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::from_vec(n, d, vec![0.0; n * d])
    }

    /// Entries drawn i.i.d. from `N(0, scale^2)`.
    pub fn random_normal<R: Rng + ?Sized>(n: usize, d: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let data = (0..n * d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_vec(n, d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Replaces row `i`, rejecting wrong lengths and non-finite values.
    pub fn set_row(&mut self, i: usize, w: &[f64]) -> Result<()> {
        if i >= self.n {
            return Err(Error::ClassOutOfRange { index: i, n: self.n });
        }
        if w.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding row"));
        }
        self.row_mut(i).copy_from_slice(w);
        Ok(())
    }

    /// `W h`: one logit per class.
    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        self.rows().map(|w| crate::kernels::dot(w, h)).collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.n as u64).to_le_bytes())?;
        out.write_all(&(self.d as u64).to_le_bytes())?;
        for x in &self.data {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        Self::read_payload(&mut input).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format("truncated embedding file".into())
            }
            other => other,
        })
    }

    fn read_payload<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        let d = u64::from_le_bytes(word);
        let len = n
            .checked_mul(d)
            .and_then(|v| usize::try_from(v).ok())
            .ok_or_else(|| Error::Format(format!("header too large: n = {n}, d = {d}")))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            input.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Self::from_vec(n as usize, d as usize, data)
    }
}
