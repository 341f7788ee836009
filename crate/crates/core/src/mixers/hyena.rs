//! Gated long-convolution mixer with implicitly parameterized filters.

use std::f64::consts::PI;

use mixerbench_tensor::ops::fft_conv_flops;
use mixerbench_tensor::{Element, Tensor, Var};

use super::attention::dims3;
use crate::params::{Bound, Builder, Linear, ParamId};
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 2;
pub const FILTER_FREQS: usize = 8;
pub const FILTER_HIDDEN: usize = 32;

#[derive(Debug, Clone)]
pub struct Hyena {
    pub dim: usize,
    pub order: usize,
    pub in_proj: Linear,
    pub filter: [Linear; 3],
    /// `log(alpha)` per filter channel, `[order * d]`.
    pub log_decay: ParamId,
    pub out_proj: Linear,
}

/// Number of positional features fed to the filter network.
pub fn positional_width() -> usize {
    1 + 2 * FILTER_FREQS
}

/// `[n, 1 + 2F]`: `t/n` followed by sine/cosine pairs at frequencies `1..=F`.
pub fn positional_features<T: Element>(n: usize) -> Result<Tensor<T>> {
    let w = positional_width();
    let mut data = Vec::with_capacity(n * w);
    for t in 0..n {
        let x = t as f64 / n as f64;
        data.push(x);
        for f in 1..=FILTER_FREQS {
            let a = 2.0 * PI * f as f64 * x;
            data.push(a.sin());
            data.push(a.cos());
        }
    }
    Ok(Tensor::from_f64([n, w], &data)?)
}

impl Hyena {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, dim: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("hyena order must be positive"));
        }
        let in_proj = b.linear("in_proj", dim, (order + 1) * dim, true)?;
        let mut f = b.scope("filter");
        let filter = [
            f.linear("fc1", positional_width(), FILTER_HIDDEN, true)?,
            f.linear("fc2", FILTER_HIDDEN, FILTER_HIDDEN, true)?,
            f.linear("fc3", FILTER_HIDDEN, order * dim, false)?,
        ];
        // decay rates spread so the slowest channel keeps ~1% of its
        // response at the far end and the fastest after a fifth of it
        let channels = order * dim;
        let (slow, fast) = ((0.01f64).ln().abs() / 1.5, (0.01f64).ln().abs() / 0.3);
        let rates: Vec<f64> = (0..channels)
            .map(|i| {
                let s = if channels > 1 { i as f64 / (channels - 1) as f64 } else { 0.0 };
                (slow + s * (fast - slow)).ln()
            })
            .collect();
        let log_decay = f.tensor("log_decay", Tensor::from_f64([channels], &rates)?);
        let out_proj = b.linear("out_proj", dim, dim, true)?;
        Ok(Hyena {
            dim,
            order,
            in_proj,
            filter,
            log_decay,
            out_proj,
        })
    }

    /// Implicit filters `[n, order * d]`: the filter network evaluated on
    /// positional features, times `exp(-alpha * t / n)`.
    pub fn filters<T: Element>(&self, p: &Bound<T>, n: usize) -> Result<Var<T>> {
        let z = Var::constant(positional_features::<T>(n)?);
        let z = self.filter[0].forward(p, &z)?.sin()?;
        let z = self.filter[1].forward(p, &z)?.sin()?;
        let h = self.filter[2].forward(p, &z)?;
        let t: Vec<f64> = (0..n).map(|t| t as f64 / n as f64).collect();
        let t = Var::constant(Tensor::from_f64([n, 1], &t)?);
        let alpha = p.var(self.log_decay).exp()?;
        let decay = t.mul(&alpha)?.neg()?.exp()?;
        Ok(h.mul(&decay)?)
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let (_, n, _) = dims3(x, "hyena_forward")?;
        let h = self.filters(p, n)?;
        self.forward_with_filters(p, x, &h)
    }

    /// The gated recurrence with explicit filters `[n, order * d]`:
    /// `z = v; z = g_i * (z conv h_i)`, then the output projection.
    pub fn forward_with_filters<T: Element>(&self, p: &Bound<T>, x: &Var<T>, filters: &Var<T>) -> Result<Var<T>> {
        let (_, n, d) = dims3(x, "hyena_forward")?;
        if d != self.dim {
            return Err(Error::invalid("hyena_forward", format!("width {d}, expected {}", self.dim)));
        }
        if filters.shape() != [n, self.order * d] {
            return Err(Error::invalid(
                "hyena_forward",
                format!("filters {:?} for sequence length {n} (expected [{n}, {}])", filters.shape(), self.order * d),
            ));
        }
        let proj = self.in_proj.forward(p, x)?;
        let mut z = proj.slice(2, 0, d)?;
        for i in 0..self.order {
            let g = proj.slice(2, (i + 1) * d, (i + 2) * d)?;
            let h = filters.slice(1, i * d, (i + 1) * d)?;
            z = g.mul(&z.fft_conv(&h)?)?;
        }
        self.out_proj.forward(p, &z)
    }

    pub fn flops(&self, batch: usize, n: usize) -> u64 {
        hyena_flops(batch, n, self.dim, self.order)
    }
}

pub fn hyena_flops(batch: usize, n: usize, d: usize, order: usize) -> u64 {
    let (b, n64, d64, o) = (batch as u64, n as u64, d as u64, order as u64);
    let (f, hdn) = (positional_width() as u64, FILTER_HIDDEN as u64);
    let in_proj = 2 * b * n64 * d64 * (o + 1) * d64;
    let filter = 2 * n64 * (f * hdn + hdn * hdn + hdn * o * d64) + 2 * n64 * o * d64;
    let convs = o * (fft_conv_flops(batch, n, d) + b * n64 * d64);
    let out = 2 * b * n64 * d64 * d64;
    in_proj + filter + convs + out
}
