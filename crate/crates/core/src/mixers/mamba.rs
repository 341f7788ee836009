//! MambaVision mixer: a selective-scan branch and a gated convolution branch
//! of width `d/2` each, concatenated and projected back to `d`.

use mixerbench_tensor::ops::depthwise_conv_flops;
use mixerbench_tensor::{Element, Tensor, Var};
use rand::Rng;

use super::attention::dims3;
use super::scan::{scan_flops, selective_scan};
use crate::params::{Bound, Builder, Linear, ParamId};
use crate::{Error, Result};

pub const DEFAULT_STATE: usize = 16;
pub const CONV_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub proj: Linear,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
}

impl Branch {
    fn new<T: Element>(b: &mut Builder<'_, T>, name: &str, dim: usize, inner: usize) -> Result<Self> {
        let mut s = b.scope(name);
        let proj = s.linear("proj", dim, inner, true)?;
        let bound = 1.0 / (CONV_KERNEL as f64).sqrt();
        Ok(Branch {
            proj,
            conv_w: s.uniform("conv_weight", &[CONV_KERNEL, inner], bound)?,
            conv_b: s.zeros("conv_bias", &[inner])?,
        })
    }

    /// `SiLU(Conv(Linear(x)))`.
    fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let z = self.proj.forward(p, x)?;
        Ok(z.depthwise_conv1d(p.var(self.conv_w))?.add(p.var(self.conv_b))?.silu()?)
    }
}

#[derive(Debug, Clone)]
pub struct MambaVision {
    pub dim: usize,
    pub inner: usize,
    pub state: usize,
    pub ssm_branch: Branch,
    pub gate_branch: Branch,
    pub dt_proj: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
    /// `log(-A)`, `[inner, state]`.
    pub a_log: ParamId,
    pub out_proj: Linear,
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl MambaVision {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, dim: usize, state: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::config(format!("mamba_vision needs an even embed_dim, got {dim}")));
        }
        if state == 0 {
            return Err(Error::config("mamba_vision state size must be positive"));
        }
        let inner = dim / 2;
        let ssm_branch = Branch::new(b, "ssm", dim, inner)?;
        let gate_branch = Branch::new(b, "gate", dim, inner)?;
        let mut s = b.scope("ssm");
        let dt_bound = 1.0 / (inner as f64).sqrt();
        let dt_w = s.uniform("dt_proj.weight", &[inner, inner], 0.1 * dt_bound)?;
        // step sizes start log-uniform in [1e-3, 1e-1]
        let dt_b: Vec<f64> = (0..inner)
            .map(|_| {
                let e: f64 = s.rng().random_range((1e-3f64).ln()..(1e-1f64).ln());
                inverse_softplus(e.exp())
            })
            .collect();
        let dt_b = s.tensor("dt_proj.bias", Tensor::from_f64([inner], &dt_b)?);
        let dt_proj = Linear {
            w: dt_w,
            b: Some(dt_b),
            din: inner,
            dout: inner,
        };
        let b_proj = s.linear("b_proj", inner, state, false)?;
        let c_proj = s.linear("c_proj", inner, state, false)?;
        let a: Vec<f64> = (0..inner).flat_map(|_| (1..=state).map(|k| (k as f64).ln())).collect();
        let a_log = s.tensor("a_log", Tensor::from_f64([inner, state], &a)?);
        let out_proj = b.linear("out_proj", dim, dim, true)?;
        Ok(MambaVision {
            dim,
            inner,
            state,
            ssm_branch,
            gate_branch,
            dt_proj,
            b_proj,
            c_proj,
            a_log,
            out_proj,
        })
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let (_, _, d) = dims3(x, "mamba_vision_forward")?;
        if d != self.dim {
            return Err(Error::invalid("mamba_vision_forward", format!("width {d}, expected {}", self.dim)));
        }
        let u = self.ssm_branch.forward(p, x)?;
        let delta = self.dt_proj.forward(p, &u)?.softplus()?;
        let bm = self.b_proj.forward(p, &u)?;
        let cm = self.c_proj.forward(p, &u)?;
        let a = p.var(self.a_log).exp()?.neg()?;
        let z1 = selective_scan(&u, &delta, &a, &bm, &cm)?;
        let z2 = self.gate_branch.forward(p, x)?;
        self.out_proj.forward(p, &Var::concat(&[z1, z2], 2)?)
    }

    pub fn flops(&self, batch: usize, n: usize) -> u64 {
        mamba_flops(batch, n, self.dim, self.state)
    }
}

pub fn mamba_flops(batch: usize, n: usize, d: usize, state: usize) -> u64 {
    let c = d / 2;
    let rows = (batch * n) as u64;
    let (d64, c64, s64) = (d as u64, c as u64, state as u64);
    let in_proj = 2 * 2 * rows * d64 * c64;
    let conv = 2 * depthwise_conv_flops(batch, n, c, CONV_KERNEL);
    let ssm_proj = 2 * rows * c64 * c64 + 2 * 2 * rows * c64 * s64;
    let out = 2 * rows * d64 * d64;
    in_proj + conv + ssm_proj + scan_flops(batch, n, c, state) + out
}
