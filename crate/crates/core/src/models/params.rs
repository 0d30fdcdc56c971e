use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

const MAGIC: &[u8; 8] = b"FGPARAM1";

/// Ordered collection of named weight tensors.
///
/// The order is fixed by the model layout, so a flat vector of all entries
/// in order (row-major within each tensor) round-trips exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
}

impl ModelParams {
    pub fn new(entries: Vec<(String, Tensor2)>) -> Self {
        let (names, tensors) = entries.into_iter().unzip();
        Self { names, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor2::len).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn tensor(&self, slot: usize) -> &Tensor2 {
        &self.tensors[slot]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor2] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor2] {
        &mut self.tensors
    }

    /// Replaces every tensor; shapes must match.
    pub fn set_tensors(&mut self, tensors: Vec<Tensor2>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::param(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        for (dst, src) in self.tensors.iter_mut().zip(tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::shape("set_tensors", dst.shape(), src.shape()));
            }
            *dst = src;
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_tensors(&self.tensors)
    }

    /// Same names and shapes as `self`, values from `flat`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ModelParams> {
        let mut out = self.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::param(format!(
                "flat vector has {} values, parameters hold {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        for t in self.tensors.iter_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor2::is_finite)
    }

    /// Binary form: 8-byte magic, u32 tensor count, then per tensor a u32
    /// name length, UTF-8 name, u32 rows, u32 cols and row-major f64 values.
    /// Integers and floats are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::param("not a parameter file (bad magic)"));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::param("parameter name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data = (0..rows * cols)
                .map(|_| Ok(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))))
                .collect::<Result<Vec<_>>>()?;
            entries.push((name, Tensor2::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::param("trailing bytes after parameters"));
        }
        Ok(ModelParams::new(entries))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Row-major concatenation of `tensors`.
pub fn flatten_tensors(tensors: &[Tensor2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(tensors.iter().map(Tensor2::len).sum());
    for t in tensors {
        out.extend_from_slice(t.data());
    }
    out
}

/// Splits `flat` into tensors shaped like `like`.
pub fn unflatten_like(like: &[Tensor2], flat: &[f64]) -> Result<Vec<Tensor2>> {
    let total: usize = like.iter().map(Tensor2::len).sum();
    if flat.len() != total {
        return Err(Error::param(format!(
            "flat vector has {} values, expected {total}",
            flat.len()
        )));
    }
    let mut offset = 0;
    like.iter()
        .map(|t| {
            let n = t.len();
            let out = Tensor2::from_vec(t.rows(), t.cols(), flat[offset..offset + n].to_vec());
            offset += n;
            out
        })
        .collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::param("parameter file truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
