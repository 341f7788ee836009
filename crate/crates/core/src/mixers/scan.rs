//! Selective state-space scan.
//!
//! Per channel `c` and state `k`, with `h_0 = 0`:
//! `h_t = exp(delta_t a_ck) h_{t-1} + delta_t b_tk u_t`, `y_tc = sum_k c_tk h_tck`.

use mixerbench_tensor::instrument::add_flops;
use mixerbench_tensor::{alloc, record, Element, Tensor, Var};

use crate::{Error, Result};

/// Flops charged per (step, channel, state) triple.
pub const SCAN_FLOPS_PER_STATE: u64 = 7;

pub fn scan_flops(batch: usize, n: usize, c: usize, s: usize) -> u64 {
    SCAN_FLOPS_PER_STATE * (batch * n * c * s) as u64
}

struct Dims {
    batch: usize,
    n: usize,
    c: usize,
    s: usize,
}

fn check<T: Element>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    cm: &Tensor<T>,
    batched: bool,
) -> Result<Dims> {
    let lead = if batched { 1 } else { 0 };
    let bad = || {
        Error::invalid(
            "selective_scan",
            format!(
                "shape mismatch: u {:?}, delta {:?}, A {:?}, B {:?}, C {:?}",
                u.shape(),
                delta.shape(),
                a.shape(),
                b.shape(),
                cm.shape()
            ),
        )
    };
    if u.rank() != 2 + lead || a.rank() != 2 {
        return Err(bad());
    }
    let batch = if batched { u.shape()[0] } else { 1 };
    let (n, c) = (u.shape()[lead], u.shape()[lead + 1]);
    let s = a.shape()[1];
    let seq = |w: usize| -> Vec<usize> {
        let mut v = if batched { vec![batch] } else { vec![] };
        v.extend([n, w]);
        v
    };
    if delta.shape() != u.shape() || a.shape()[0] != c || b.shape() != seq(s) || cm.shape() != seq(s) {
        return Err(bad());
    }
    if a.data().iter().any(|&x| !(x < T::zero())) {
        return Err(Error::invalid("selective_scan", "A must be strictly negative"));
    }
    Ok(Dims { batch, n, c, s })
}

/// Reference evaluation: one step at a time, one sequence `[n, c]`.
pub fn selective_scan_sequential<T: Element>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = check(u, delta, a, b, c, false)?;
    let mut y = vec![T::zero(); d.n * d.c];
    scan_kernel(&d, 0, u.data(), delta.data(), a.data(), b.data(), c.data(), &mut y, None);
    Ok(Tensor::from_vec([d.n, d.c], y)?)
}

/// Blocked evaluation: each chunk runs from a zero state while tracking the
/// product of its transition factors, then the carried state is folded in
/// as `h_t = local_t + (prod_{j<=t} abar_j) h_carry`.
pub fn selective_scan_chunked<T: Element>(
    u: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    chunk: usize,
) -> Result<Tensor<T>> {
    if chunk == 0 {
        return Err(Error::invalid("selective_scan", "chunk length must be positive"));
    }
    let Dims { n, c: ch, s, .. } = check(u, delta, a, b, c, false)?;
    let (ud, dd, ad, bd, cd) = (u.data(), delta.data(), a.data(), b.data(), c.data());
    let mut y = vec![T::zero(); n * ch];
    let mut carry = vec![T::zero(); ch * s];
    let mut local = vec![T::zero(); chunk * ch * s];
    let mut decay = vec![T::zero(); chunk * ch * s];
    let mut start = 0;
    while start < n {
        let len = chunk.min(n - start);
        for i in 0..ch {
            for k in 0..s {
                let mut l = T::zero();
                let mut prod = T::one();
                for j in 0..len {
                    let t = start + j;
                    let dt = dd[t * ch + i];
                    let abar = (dt * ad[i * s + k]).exp();
                    l = abar * l + dt * bd[t * s + k] * ud[t * ch + i];
                    prod = prod * abar;
                    local[(j * ch + i) * s + k] = l;
                    decay[(j * ch + i) * s + k] = prod;
                }
            }
        }
        for j in 0..len {
            let t = start + j;
            for i in 0..ch {
                let mut acc = T::zero();
                for k in 0..s {
                    let h = local[(j * ch + i) * s + k] + decay[(j * ch + i) * s + k] * carry[i * s + k];
                    acc = acc + cd[t * s + k] * h;
                }
                y[t * ch + i] = acc;
            }
        }
        for i in 0..ch {
            for k in 0..s {
                let last = (len - 1) * ch + i;
                carry[i * s + k] = local[last * s + k] + decay[last * s + k] * carry[i * s + k];
            }
        }
        start += len;
    }
    Ok(Tensor::from_vec([n, ch], y)?)
}

/// Runs sequence `bi` of a batch; optionally stores every state
/// (`[n, c, s]` per sequence) for the backward pass.
#[allow(clippy::too_many_arguments)]
fn scan_kernel<T: Element>(
    d: &Dims,
    bi: usize,
    u: &[T],
    delta: &[T],
    a: &[T],
    b: &[T],
    c: &[T],
    y: &mut [T],
    mut states: Option<&mut [T]>,
) {
    let (n, ch, s) = (d.n, d.c, d.s);
    let xo = bi * n * ch;
    let so = bi * n * s;
    let mut h = vec![T::zero(); ch * s];
    for t in 0..n {
        for i in 0..ch {
            let dt = delta[xo + t * ch + i];
            let du = dt * u[xo + t * ch + i];
            let mut acc = T::zero();
            for k in 0..s {
                let abar = (dt * a[i * s + k]).exp();
                let v = abar * h[i * s + k] + du * b[so + t * s + k];
                h[i * s + k] = v;
                acc = acc + c[so + t * s + k] * v;
            }
            y[xo + t * ch + i] = acc;
        }
        if let Some(st) = states.as_deref_mut() {
            let base = (bi * n + t) * ch * s;
            st[base..base + ch * s].copy_from_slice(&h);
        }
    }
}

/// Differentiable selective scan over `[batch, n, c]` inputs with
/// `A: [c, s]` and `B, C: [batch, n, s]`.
pub fn selective_scan<T: Element>(u: &Var<T>, delta: &Var<T>, a: &Var<T>, b: &Var<T>, c: &Var<T>) -> Result<Var<T>> {
    let d = check(u.value(), delta.value(), a.value(), b.value(), c.value(), true)?;
    let (batch, n, ch, s) = (d.batch, d.n, d.c, d.s);
    let tracked = [u, delta, a, b, c].iter().any(|v| v.is_tracked());
    let mut y = alloc::zeroed::<T>(batch * n * ch)?;
    let mut states = if tracked { alloc::zeroed::<T>(batch * n * ch * s)? } else { Vec::new() };
    for bi in 0..batch {
        let st = if tracked { Some(&mut states[..]) } else { None };
        scan_kernel(
            &d,
            bi,
            u.value().data(),
            delta.value().data(),
            a.value().data(),
            b.value().data(),
            c.value().data(),
            &mut y,
            st,
        );
    }
    add_flops(scan_flops(batch, n, ch, s));
    let y = Tensor::from_vec([batch, n, ch], y)?;
    let states = if tracked { Some(Tensor::from_vec([batch, n, ch, s], states)?) } else { None };
    let (uv, dv, av, bv, cv) = (
        u.value().clone(),
        delta.value().clone(),
        a.value().clone(),
        b.value().clone(),
        c.value().clone(),
    );
    Ok(record("selective_scan", &[u, delta, a, b, c], y, move |g| {
        let states = states.ok_or(mixerbench_tensor::Error::Invalid {
        op: "selective_scan",
        detail: "states were not kept for an untracked scan".into(),
    })?;
        let hs = states.data();
        let (u, dl, a, b, c, g) = (uv.data(), dv.data(), av.data(), bv.data(), cv.data(), g.data());
        let mut gu = alloc::zeroed::<T>(u.len())?;
        let mut gd = alloc::zeroed::<T>(u.len())?;
        let mut ga = vec![T::zero(); a.len()];
        let mut gb = alloc::zeroed::<T>(b.len())?;
        let mut gc = alloc::zeroed::<T>(c.len())?;
        let mut carry = vec![T::zero(); ch * s];
        for bi in 0..batch {
            carry.iter_mut().for_each(|x| *x = T::zero());
            for t in (0..n).rev() {
                let hbase = (bi * n + t) * ch * s;
                let so = (bi * n + t) * s;
                for i in 0..ch {
                    let xi = (bi * n + t) * ch + i;
                    let (dt, ut, gy) = (dl[xi], u[xi], g[xi]);
                    let mut g_dt = T::zero();
                    let mut g_u = T::zero();
                    for k in 0..s {
                        let h = hs[hbase + i * s + k];
                        let hprev = if t > 0 { hs[hbase - ch * s + i * s + k] } else { T::zero() };
                        let ak = a[i * s + k];
                        let abar = (dt * ak).exp();
                        gc[so + k] = gc[so + k] + gy * h;
                        let gh = carry[i * s + k] + gy * c[so + k];
                        let g_abar = gh * hprev * abar;
                        g_dt = g_dt + g_abar * ak + gh * b[so + k] * ut;
                        ga[i * s + k] = ga[i * s + k] + g_abar * dt;
                        gb[so + k] = gb[so + k] + gh * dt * ut;
                        g_u = g_u + gh * dt * b[so + k];
                        carry[i * s + k] = gh * abar;
                    }
                    gd[xi] = g_dt;
                    gu[xi] = g_u;
                }
            }
        }
        Ok(vec![
            Some(Tensor::from_vec(uv.shape().to_vec(), gu)?),
            Some(Tensor::from_vec(dv.shape().to_vec(), gd)?),
            Some(Tensor::from_vec(av.shape().to_vec(), ga)?),
            Some(Tensor::from_vec(bv.shape().to_vec(), gb)?),
            Some(Tensor::from_vec(cv.shape().to_vec(), gc)?),
        ])
    })?)
}
