//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"PNFCKPT\0"  u32 version
//! u64 len, model config as TOML (len bytes, UTF-8)
//! u64 count, then per array:
//!   u32 len, name (UTF-8)   u32 ndim   u64 dims[ndim]   f64 data[prod(dims)]
//! ```
//!
//! Complex weights are stored as one `rows × 2·cols` array holding the real
//! block followed by the imaginary block. Loading rebuilds the model from the
//! config and then overwrites every encoding and weight, so values survive
//! bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::model::{ModelConfig, PnfModel};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PNFCKPT\0";
pub const VERSION: u32 = 1;

fn arrays(model: &PnfModel) -> Vec<(String, &Array2<f64>)> {
    let mut out = Vec::new();
    for (b, br) in model.branches.iter().enumerate() {
        for (k, e) in br.shell.iter().enumerate() {
            out.push((format!("branch{b}.shell{k}.freqs"), &e.freqs));
        }
        for (k, e) in br.chain.iter().enumerate() {
            out.push((format!("branch{b}.chain{k}.freqs"), &e.freqs));
        }
    }
    for (id, w) in model.params() {
        out.push((format!("branch{}.{:?}", id.branch, id.kind), w.raw()));
    }
    out
}

pub fn encode(model: &PnfModel) -> Result<Vec<u8>> {
    let config = toml::to_string(&model.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(config.len() as u64).to_le_bytes());
    buf.extend_from_slice(config.as_bytes());
    let list = arrays(model);
    buf.extend_from_slice(&(list.len() as u64).to_le_bytes());
    for (name, a) in list {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        for d in a.shape() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<PnfModel> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let n = r.len()?;
    let text = r.string(n)?;
    let config: ModelConfig = toml::from_str(&text).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let mut model = PnfModel::init(&config)?;
    let count = r.len()?;
    let mut stored = std::collections::HashMap::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = r.string(n)?;
        if r.u32()? != 2 {
            return Err(Error::Checkpoint(format!("array {name} is not 2D")));
        }
        let (rows, cols) = (r.len()?, r.len()?);
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(8).is_some_and(|b| b <= r.buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("array {name} exceeds the file")))?;
        let data: Vec<f64> = r
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let a = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if stored.insert(name.clone(), a).is_some() {
            return Err(Error::Checkpoint(format!("duplicate array {name}")));
        }
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let expected = arrays(&model).len();
    if stored.len() != expected {
        return Err(Error::Checkpoint(format!("{} arrays for a model with {expected}", stored.len())));
    }
    let mut fill = |name: String, dst: &mut Array2<f64>| -> Result<()> {
        let src = stored
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))?;
        if src.dim() != dst.dim() {
            return Err(Error::Checkpoint(format!("array {name} has shape {:?}, expected {:?}", src.dim(), dst.dim())));
        }
        *dst = src;
        Ok(())
    };
    for (b, br) in model.branches.iter_mut().enumerate() {
        for (k, e) in br.shell.iter_mut().enumerate() {
            fill(format!("branch{b}.shell{k}.freqs"), &mut e.freqs)?;
        }
        for (k, e) in br.chain.iter_mut().enumerate() {
            fill(format!("branch{b}.chain{k}.freqs"), &mut e.freqs)?;
        }
    }
    for (id, w) in model.params_mut() {
        fill(format!("branch{}.{:?}", id.branch, id.kind), w.raw_mut())?;
    }
    Ok(model)
}

pub fn save(model: &PnfModel, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PnfModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
