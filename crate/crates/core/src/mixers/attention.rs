//! Multi-head softmax self-attention.

use mixerbench_tensor::{Element, Tensor, Var};

use crate::params::{Bound, Builder, ParamId};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Attention {
    pub dim: usize,
    pub heads: usize,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl Attention {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::config(format!(
                "embed_dim {dim} is not divisible by num_heads {heads}"
            )));
        }
        let bound = (3.0 / dim as f64).sqrt();
        Ok(Attention {
            dim,
            heads,
            wq: b.uniform("w_q", &[dim, dim], bound)?,
            wk: b.uniform("w_k", &[dim, dim], bound)?,
            wv: b.uniform("w_v", &[dim, dim], bound)?,
            wo: b.uniform("w_o", &[dim, dim], bound)?,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// `x` is `[batch, n, d]`. `mask`, when given, is `[m, n, n]` where `m`
    /// divides `batch`; consecutive runs of `batch / m` sequences share a
    /// mask slice (one per window).
    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>, mask: Option<&Tensor<T>>) -> Result<Var<T>> {
        let (b, n, d) = self.check(x)?;
        let (h, hd) = (self.heads, self.head_dim());
        let weights = self.weights(p, x, mask)?;
        let v = self.split(x.matmul(p.var(self.wv))?, b, n)?;
        let y = weights
            .matmul(&v)?
            .reshape([b, h, n, hd])?
            .permute(&[0, 2, 1, 3])?
            .reshape([b, n, d])?;
        Ok(y.matmul(p.var(self.wo))?)
    }

    /// Post-softmax attention weights, `[batch * heads, n, n]`.
    pub fn weights<T: Element>(&self, p: &Bound<T>, x: &Var<T>, mask: Option<&Tensor<T>>) -> Result<Var<T>> {
        let (b, n, _) = self.check(x)?;
        let q = self.split(x.matmul(p.var(self.wq))?, b, n)?;
        let k = self.split(x.matmul(p.var(self.wk))?, b, n)?;
        let scores = q.matmul_t(&k)?.mul_scalar(1.0 / (self.head_dim() as f64).sqrt())?;
        Ok(match mask {
            Some(m) => {
                if m.rank() != 3 || m.shape()[1] != n || m.shape()[2] != n || m.shape()[0] == 0 || b % m.shape()[0] != 0 {
                    return Err(Error::invalid(
                        "attention_forward",
                        format!("mask {:?} for {b} sequences of length {n}", m.shape()),
                    ));
                }
                scores.softmax_masked(m)?
            }
            None => scores.softmax(2)?,
        })
    }

    fn check<T: Element>(&self, x: &Var<T>) -> Result<(usize, usize, usize)> {
        let (b, n, d) = dims3(x, "attention_forward")?;
        if d != self.dim {
            return Err(Error::invalid("attention_forward", format!("width {d}, expected {}", self.dim)));
        }
        if n == 0 {
            return Err(Error::invalid("attention_forward", "empty sequence"));
        }
        Ok((b, n, d))
    }

    /// `[b, n, d]` to per-head `[b * h, n, d / h]`.
    fn split<T: Element>(&self, t: Var<T>, b: usize, n: usize) -> Result<Var<T>> {
        let (h, hd) = (self.heads, self.head_dim());
        Ok(t.reshape([b, n, h, hd])?.permute(&[0, 2, 1, 3])?.reshape([b * h, n, hd])?)
    }

    /// Multiply-accumulate count (2 per MAC) of one forward pass.
    pub fn flops(&self, batch: usize, n: usize) -> u64 {
        attention_flops(batch, n, self.dim)
    }
}

pub fn attention_flops(batch: usize, n: usize, d: usize) -> u64 {
    let (b, n, d) = (batch as u64, n as u64, d as u64);
    // four d×d projections plus QK^T and AV
    b * (4 * 2 * n * d * d + 2 * 2 * n * n * d)
}

pub(crate) fn dims3<T: Element>(x: &Var<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, n, d] => Ok((b, n, d)),
        ref s => Err(Error::invalid(op, format!("expected [batch, n, d], got {s:?}"))),
    }
}
