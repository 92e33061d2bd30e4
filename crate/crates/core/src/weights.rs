//! Named parameter maps and the binary weight file.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "G2HF"  version(=1)  count
//! count x { name_len  name(UTF-8)  ndim  dims[ndim]  f32 data (row-major) }
//! ```
//!
//! Tensors are written in name order. Values are stored as `f32`, so saving
//! rounds each element to the nearest `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::WeightError;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"G2HF";
pub const VERSION: u32 = 1;

/// Parameter tensors keyed by dotted path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelWeights {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    pub fn insert(&mut self, name: String, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name, t)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(WeightError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(WeightError::VersionMismatch { found: version, expected: VERSION });
        }
        let count = r.u32("tensor count")?;
        let mut tensors = BTreeMap::new();
        for i in 0..count {
            let len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| WeightError::Malformed(format!("tensor {i}: name is not UTF-8")))?
                .to_owned();
            let ndim = r.u32("ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32("dims")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| WeightError::Malformed(format!("{name}: shape {shape:?} overflows")))?;
            let data = r
                .take(n, "tensor data")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| WeightError::Malformed(e.to_string()))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(WeightError::Malformed(format!("duplicate tensor name {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(WeightError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| WeightError::Io { path: path.to_owned(), msg: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| WeightError::Io { path: path.to_owned(), msg: e.to_string() })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            WeightError::Truncated(format!("{what} needs {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelWeights {
        let mut w = ModelWeights::default();
        w.insert("a.weight".into(), Tensor::from_fn(&[2, 1, 3, 3], |i| i as f64 * 0.25 - 1.0));
        w.insert("a.bias".into(), Tensor::new(&[2], vec![0.5, -0.125]).unwrap());
        w
    }

    #[test]
    fn layout_is_exact() {
        let mut w = ModelWeights::default();
        w.insert("b".into(), Tensor::new(&[1], vec![1.0]).unwrap());
        let bytes = w.to_bytes();
        let expected: Vec<u8> = [
            &b"G2HF"[..],
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            b"b",
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1.0f32.to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip() {
        let w = sample();
        assert_eq!(ModelWeights::from_bytes(&w.to_bytes()).unwrap(), w);
    }

    #[test]
    fn corrupt_files_have_distinct_codes() {
        let bytes = sample().to_bytes();
        let mut magic = bytes.clone();
        magic[0] = b'X';
        let mut version = bytes.clone();
        version[4] = 2;
        let truncated = &bytes[..bytes.len() - 3];
        let codes: Vec<u32> = [&magic[..], &version[..], truncated]
            .iter()
            .map(|b| ModelWeights::from_bytes(b).unwrap_err().code())
            .collect();
        assert_eq!(codes, [10, 11, 12]);
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.push(0);
        assert!(matches!(ModelWeights::from_bytes(&bytes), Err(WeightError::Malformed(_))));
    }
}
