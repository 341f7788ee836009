//! Untracked array kernels shared by forward primitives and adjoints.

use crate::alloc;
use crate::tensor::{numel, strides};
use crate::{Element, Error, Result, Tensor};

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` laid over `out`, zero along broadcast axes.
pub fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let st = strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < off || shape[i - off] == 1 {
                0
            } else {
                st[i - off]
            }
        })
        .collect()
}

/// Visits every index of `shape` in row-major order, passing the flat
/// output offset and the offsets under strides `sa` and `sb`.
#[inline]
pub fn walk2(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = shape.len();
    if numel(shape) == 0 {
        return;
    }
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = shape[rank - 1];
    let (la, lb) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut ba, mut bb, mut out) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..last {
            f(out + j, ba + j * la, bb + j * lb);
        }
        out += last;
        let mut d = rank - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            ba += sa[d];
            bb += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            ba -= sa[d] * shape[d];
            bb -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

pub fn binary<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape(op, format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape())))?;
    let (ad, bd) = (a.data(), b.data());
    let mut out = alloc::zeroed(numel(&out_shape))?;
    if b.numel() == 1 {
        let y = bd[0];
        if a.numel() == out.len() {
            for (o, &x) in out.iter_mut().zip(ad) {
                *o = f(x, y);
            }
            return Tensor::from_vec(out_shape, out);
        }
    }
    // b repeats over a's leading axes
    if a.shape() == out_shape.as_slice() && out_shape.ends_with(b.shape()) {
        let m = b.numel().max(1);
        for (oc, ac) in out.chunks_mut(m).zip(ad.chunks(m)) {
            for ((o, &x), &y) in oc.iter_mut().zip(ac).zip(bd) {
                *o = f(x, y);
            }
        }
        return Tensor::from_vec(out_shape, out);
    }
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    walk2(&out_shape, &sa, &sb, |o, ia, ib| out[o] = f(ad[ia], bd[ib]));
    Tensor::from_vec(out_shape, out)
}

/// Sums `g` down to `shape` (the adjoint of broadcasting).
pub fn sum_to<T: Element>(g: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    if g.shape() == shape {
        return Ok(g.clone());
    }
    let mut out = alloc::zeroed::<T>(numel(shape))?;
    let gd = g.data();
    if g.shape().ends_with(shape) {
        let m = out.len().max(1);
        for chunk in gd.chunks(m) {
            for (o, &x) in out.iter_mut().zip(chunk) {
                *o += x;
            }
        }
        return Tensor::from_vec(shape.to_vec(), out);
    }
    let st = broadcast_strides(shape, g.shape());
    let zero = vec![0; g.rank()];
    walk2(g.shape(), &st, &zero, |o, i, _| out[i] += gd[o]);
    Tensor::from_vec(shape.to_vec(), out)
}

pub fn broadcast_to<T: Element>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    match broadcast_shape(x.shape(), shape) {
        Some(s) if s == shape => {}
        _ => {
            return Err(Error::shape(
                "broadcast_to",
                format!("cannot broadcast {:?} to {shape:?}", x.shape()),
            ))
        }
    }
    let mut out = alloc::zeroed::<T>(numel(shape))?;
    let sx = broadcast_strides(x.shape(), shape);
    let zero = vec![0; shape.len()];
    let xd = x.data();
    walk2(shape, &sx, &zero, |o, i, _| out[o] = xd[i]);
    Tensor::from_vec(shape.to_vec(), out)
}

pub fn permute<T: Element>(x: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::invalid("permute", format!("{axes:?} is not a permutation of rank {rank}")));
    }
    let st = strides(x.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape()[a]).collect();
    let in_st: Vec<usize> = axes.iter().map(|&a| st[a]).collect();
    let zero = vec![0; rank];
    let mut out = alloc::zeroed::<T>(x.numel())?;
    let xd = x.data();
    walk2(&out_shape, &in_st, &zero, |o, i, _| out[o] = xd[i]);
    Tensor::from_vec(out_shape, out)
}

pub fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Layout of one gemm operand inside a (possibly batched) buffer.
#[derive(Clone, Copy, Debug)]
pub struct MatLayout {
    pub rs: isize,
    pub cs: isize,
    /// Elements between consecutive batch items; zero for a shared operand.
    pub batch_stride: usize,
}

impl MatLayout {
    /// Row-major `rows x cols` operand, optionally read transposed.
    pub fn dense(rows: usize, cols: usize, transposed: bool, batched: bool) -> Self {
        let (rs, cs) = if transposed { (1, cols as isize) } else { (cols as isize, 1) };
        MatLayout {
            rs,
            cs,
            batch_stride: if batched { rows * cols } else { 0 },
        }
    }
}

/// `out[b] (+)= A[b] * B[b]` for `batch` products of `m x k` by `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_batched<T: Element>(
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    la: MatLayout,
    b: &[T],
    lb: MatLayout,
    out: &mut [T],
    accumulate: bool,
) {
    let beta = if accumulate { T::one() } else { T::zero() };
    assert!(out.len() >= batch * m * n);
    for i in 0..batch {
        let ap = a[i * la.batch_stride..].as_ptr();
        let bp = b[i * lb.batch_stride..].as_ptr();
        let cp = out[i * m * n..].as_mut_ptr();
        if m == 0 || n == 0 {
            continue;
        }
        // SAFETY: the layouts are derived from the shapes of `a`, `b`, `out`,
        // whose lengths cover every element addressed for batch item `i`.
        unsafe {
            T::gemm(m, k, n, T::one(), ap, la.rs, la.cs, bp, lb.rs, lb.cs, beta, cp, n as isize, 1);
        }
    }
}
