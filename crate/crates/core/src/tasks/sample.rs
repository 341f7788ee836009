//! Task samples and their flat binary encoding.
//!
//! All integers are little-endian. Layout:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `MXSM` |
//! | 4 | 2 | format version (1) |
//! | 6 | 1 | dtype: 0 = float32, 1 = float64 |
//! | 7 | 1 | target kind: 0 = mask, 1 = clean image, 2 = label |
//! | 8 | 1 | spatial rank `r` |
//! | 9 | 3 | reserved, zero |
//! | 12 | 8 | seed (u64) |
//! | 20 | 4 | channels `C` (u32) |
//! | 24 | 4r | spatial extents (u32 each) |
//!
//! followed by the input buffer (`C * prod(extents)` values of dtype,
//! row-major `[C, E..]`) and the target: for a mask, the class count (u32)
//! and `prod(extents)` u32 class ids; for a clean image, a second
//! `C * prod(extents)` buffer; for a label, one u32.

use std::io::{Read, Write};

use mixerbench_tensor::{DType, Element, Tensor};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MXSM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Target<T: Element> {
    /// Per-pixel class ids over the spatial extents.
    Mask { classes: usize, data: Vec<u32> },
    /// Reference image with the same shape as the input.
    Clean(Tensor<T>),
    Label(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample<T: Element> {
    /// `[C, E..]`.
    pub input: Tensor<T>,
    pub target: Target<T>,
    pub seed: u64,
}

impl<T: Element> TaskSample<T> {
    pub fn channels(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn extents(&self) -> &[usize] {
        &self.input.shape()[1..]
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.rank() < 2 {
            return Err(Error::invalid("task_sample", "input must be [C, E..]"));
        }
        if !self.input.is_finite() {
            return Err(Error::invalid("task_sample", "non-finite input"));
        }
        let pixels: usize = self.extents().iter().product();
        match &self.target {
            Target::Mask { classes, data } => {
                if data.len() != pixels || data.iter().any(|&c| c as usize >= *classes) {
                    return Err(Error::invalid("task_sample", "mask size or class ids out of range"));
                }
            }
            Target::Clean(t) => {
                if t.shape() != self.input.shape() {
                    return Err(Error::invalid("task_sample", "clean target shape differs from input"));
                }
            }
            Target::Label(_) => {}
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> Result<TaskSample<U>> {
        Ok(TaskSample {
            input: self.input.cast()?,
            target: match &self.target {
                Target::Mask { classes, data } => Target::Mask {
                    classes: *classes,
                    data: data.clone(),
                },
                Target::Clean(t) => Target::Clean(t.cast()?),
                Target::Label(l) => Target::Label(*l),
            },
            seed: self.seed,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        let kind = match self.target {
            Target::Mask { .. } => 0u8,
            Target::Clean(_) => 1,
            Target::Label(_) => 2,
        };
        let dtype = match T::DTYPE {
            DType::F32 => 0u8,
            DType::F64 => 1,
        };
        let ext = self.extents();
        let mut buf = Vec::with_capacity(24 + 4 * ext.len() + 2 * self.input.bytes());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&[dtype, kind, ext.len() as u8, 0, 0, 0]);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.channels() as u32).to_le_bytes());
        for &e in ext {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in self.input.data() {
            v.write_le(&mut buf);
        }
        match &self.target {
            Target::Mask { classes, data } => {
                buf.extend_from_slice(&(*classes as u32).to_le_bytes());
                for &c in data {
                    buf.extend_from_slice(&c.to_le_bytes());
                }
            }
            Target::Clean(t) => {
                for &v in t.data() {
                    v.write_le(&mut buf);
                }
            }
            Target::Label(l) => buf.extend_from_slice(&l.to_le_bytes()),
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |detail: String| Error::Format { what: "task sample", detail };
        let mut head = [0u8; 24];
        r.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dtype = match head[6] {
            0 => DType::F32,
            1 => DType::F64,
            d => return Err(bad(format!("unknown dtype {d}"))),
        };
        if dtype != T::DTYPE {
            return Err(bad(format!("stored {} but {} requested", dtype.name(), T::DTYPE.name())));
        }
        let kind = head[7];
        let rank = head[8] as usize;
        let seed = u64::from_le_bytes(head[12..20].try_into().expect("8 bytes"));
        let channels = u32::from_le_bytes(head[20..24].try_into().expect("4 bytes")) as usize;
        let mut ext_bytes = vec![0u8; 4 * rank];
        r.read_exact(&mut ext_bytes)?;
        let extents: Vec<usize> = ext_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let pixels: usize = extents.iter().product();
        let shape: Vec<usize> = std::iter::once(channels).chain(extents.iter().copied()).collect();
        let read_values = |r: &mut dyn Read, n: usize| -> Result<Vec<T>> {
            let mut bytes = vec![0u8; n * T::DTYPE.size_of()];
            r.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(T::DTYPE.size_of()).map(T::read_le).collect())
        };
        let read_u32 = |r: &mut dyn Read| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let input = Tensor::from_vec(shape.clone(), read_values(r, channels * pixels)?)?;
        let target = match kind {
            0 => {
                let classes = read_u32(r)? as usize;
                let data = (0..pixels).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
                Target::Mask { classes, data }
            }
            1 => Target::Clean(Tensor::from_vec(shape, read_values(r, channels * pixels)?)?),
            2 => Target::Label(read_u32(r)?),
            k => return Err(bad(format!("unknown target kind {k}"))),
        };
        let s = TaskSample { input, target, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}
