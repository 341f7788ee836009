//! Parameter snapshots with their validation loss.
//!
//! Little-endian layout: magic `MXCK`, version u16, dtype u8 (0 = float32,
//! 1 = float64), reserved u8, config hash length u16 and UTF-8 bytes,
//! step u64, validation loss f64, parameter count u32, then per parameter:
//! name length u16 and UTF-8 bytes, rank u8, dims u32 each, raw values.

use std::io::{Read, Write};
use std::path::Path;

use mixerbench_tensor::{DType, Element, Tensor};

use crate::params::Params;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MXCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Element> {
    pub config_hash: String,
    pub step: usize,
    pub val_loss: f64,
    pub params: Vec<(String, Tensor<T>)>,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

impl<T: Element> Checkpoint<T> {
    pub fn capture(params: &Params<T>, config_hash: &str, step: usize, val_loss: f64) -> Self {
        Checkpoint {
            config_hash: config_hash.to_string(),
            step,
            val_loss,
            params: params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn load_into(&self, params: &mut Params<T>) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(bad(format!("{} stored parameters, model has {}", self.params.len(), params.len())));
        }
        for (name, value) in &self.params {
            let id = params.find(name).ok_or_else(|| bad(format!("unknown parameter `{name}`")))?;
            if params.get(id).shape() != value.shape() {
                return Err(bad(format!(
                    "`{name}` stored as {:?}, model expects {:?}",
                    value.shape(),
                    params.get(id).shape()
                )));
            }
            params.set(id, value.clone());
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.push(match T::DTYPE {
            DType::F32 => 0,
            DType::F64 => 1,
        });
        buf.push(0);
        buf.extend_from_slice(&(self.config_hash.len() as u16).to_le_bytes());
        buf.extend_from_slice(self.config_hash.as_bytes());
        buf.extend_from_slice(&(self.step as u64).to_le_bytes());
        buf.extend_from_slice(&self.val_loss.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.rank() as u8);
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut buf);
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &read_array::<4>(r)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let [dtype, _] = read_array::<2>(r)?;
        let expected = match T::DTYPE {
            DType::F32 => 0,
            DType::F64 => 1,
        };
        if dtype != expected {
            return Err(bad(format!("dtype tag {dtype}, expected {expected}")));
        }
        let utf8 = |b: Vec<u8>| String::from_utf8(b).map_err(|e| bad(e.to_string()));
        let hash_len = u16::from_le_bytes(read_array(r)?) as usize;
        let config_hash = utf8(read_bytes(r, hash_len)?)?;
        let step = u64::from_le_bytes(read_array(r)?) as usize;
        let val_loss = f64::from_le_bytes(read_array(r)?);
        let count = u32::from_le_bytes(read_array(r)?) as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_array(r)?) as usize;
            let name = utf8(read_bytes(r, name_len)?)?;
            let [rank] = read_array::<1>(r)?;
            let shape = (0..rank)
                .map(|_| Ok(u32::from_le_bytes(read_array(r)?) as usize))
                .collect::<Result<Vec<usize>>>()?;
            let n: usize = shape.iter().product();
            let size = T::DTYPE.size_of();
            let raw = read_bytes(r, n * size)?;
            let values = raw.chunks_exact(size).map(T::read_le).collect();
            params.push((name, Tensor::from_vec(shape, values)?));
        }
        Ok(Checkpoint {
            config_hash,
            step,
            val_loss,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
