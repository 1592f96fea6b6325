//! Versioned binary parameter format.
//!
//! ```text
//! "DSAG"  u32 version  u64 fingerprint
//! u32 len, architecture JSON
//! u32 count, then per tensor: u8 rank, u32 dims[rank], f64 values
//! ```
//! All integers and floats are little endian.

use std::path::Path;

use super::{DeepSetModel, ModelConfig};
use crate::autodiff::{fnv1a, Rng, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DSAG";
const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("unexpected end of data reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn fail<T>(&self, at: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: at,
            message: message.into(),
        })
    }
}

fn config_json(config: &ModelConfig) -> String {
    serde_json::to_string(config).expect("model config serializes")
}

impl DeepSetModel {
    /// Hash of the architecture; blobs only load into a model with the same value.
    pub fn fingerprint(&self) -> u64 {
        let mut text = config_json(&self.config);
        for t in self.params.tensors() {
            text.push_str(&t.shape().to_string());
        }
        fnv1a(text.as_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = config_json(&self.config);
        let mut out = Vec::with_capacity(32 + arch.len() + 8 * self.params.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint().to_le_bytes());
        out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
        out.extend_from_slice(arch.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for t in self.params.tensors() {
            out.push(t.shape().rank() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Rebuilds a model from its own blob.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (config, fingerprint, tensors) = parse(bytes)?;
        let mut model = DeepSetModel::new(config, &mut Rng::new(0))?;
        model.install(fingerprint, tensors)?;
        Ok(model)
    }

    /// Overwrites this model's parameters; the blob must have been written
    /// by a model with the same architecture.
    pub fn load_parameters(&mut self, bytes: &[u8]) -> Result<()> {
        let (_, fingerprint, tensors) = parse(bytes)?;
        self.install(fingerprint, tensors)
    }

    fn install(&mut self, fingerprint: u64, tensors: Vec<Tensor>) -> Result<()> {
        let expected = self.fingerprint();
        let shapes_match = tensors.len() == self.params.len()
            && tensors
                .iter()
                .zip(self.params.tensors())
                .all(|(a, b)| a.shape() == b.shape());
        if fingerprint != expected || !shapes_match {
            return Err(Error::ArchitectureMismatch {
                expected,
                found: fingerprint,
            });
        }
        for (dst, src) in self.params.tensors_mut().iter_mut().zip(tensors) {
            *dst = src;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse(bytes: &[u8]) -> Result<(ModelConfig, u64, Vec<Tensor>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "not a parameter blob");
    }
    let at = r.pos;
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(at, format!("unsupported version {version}"));
    }
    let fingerprint = r.u64("fingerprint")?;
    let len = r.u32("architecture length")? as usize;
    let at = r.pos;
    let arch = r.take(len, "architecture")?;
    let config: ModelConfig = match serde_json::from_slice(arch) {
        Ok(c) => c,
        Err(e) => return r.fail(at, format!("bad architecture: {e}")),
    };
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = r.pos;
        let rank = r.u8("rank")? as usize;
        if rank > crate::autodiff::MAX_RANK {
            return r.fail(at, format!("rank {rank} too large"));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel.saturating_mul(8), "tensor values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return r.fail(r.pos, "trailing bytes");
    }
    Ok((config, fingerprint, tensors))
}
