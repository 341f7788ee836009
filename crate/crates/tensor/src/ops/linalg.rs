use crate::alloc;
use crate::instrument::add_flops;
use crate::kernels::{gemm_batched, MatLayout};
use crate::tape::record;
use crate::{Element, Error, Result, Tensor, Var};

/// How the right operand participates in a product.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Rhs {
    /// `[k, n]` shared by every row of the left operand.
    Shared,
    /// `[.., k, n]` with the same leading axes as the left operand.
    Batched,
}

struct Dims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    rhs: Rhs,
    out_shape: Vec<usize>,
}

fn dims(a: &[usize], b: &[usize], b_t: bool) -> Result<Dims> {
    let bad = || Error::shape("matmul", format!("{a:?} x {b:?}{}", if b_t { "^T" } else { "" }));
    if a.len() < 2 || b.len() < 2 {
        return Err(bad());
    }
    let (bk, bn) = if b_t {
        (b[b.len() - 1], b[b.len() - 2])
    } else {
        (b[b.len() - 2], b[b.len() - 1])
    };
    let k = a[a.len() - 1];
    if k != bk {
        return Err(bad());
    }
    if b.len() == 2 {
        let m: usize = a[..a.len() - 1].iter().product();
        let mut out_shape = a[..a.len() - 1].to_vec();
        out_shape.push(bn);
        return Ok(Dims { batch: 1, m, k, n: bn, rhs: Rhs::Shared, out_shape });
    }
    if a.len() != b.len() || a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(bad());
    }
    let batch = a[..a.len() - 2].iter().product();
    let m = a[a.len() - 2];
    let mut out_shape = a[..a.len() - 1].to_vec();
    out_shape.push(bn);
    Ok(Dims { batch, m, k, n: bn, rhs: Rhs::Batched, out_shape })
}

fn product<T: Element>(a: &Var<T>, b: &Var<T>, b_t: bool) -> Result<Var<T>> {
    let d = dims(a.shape(), b.shape(), b_t)?;
    let batched = d.rhs == Rhs::Batched;
    let mut out = alloc::zeroed::<T>(d.batch * d.m * d.n)?;
    let la = MatLayout::dense(d.m, d.k, false, true);
    let lb = if b_t {
        MatLayout::dense(d.n, d.k, true, batched)
    } else {
        MatLayout::dense(d.k, d.n, false, batched)
    };
    gemm_batched(d.batch, d.m, d.k, d.n, a.value().data(), la, b.value().data(), lb, &mut out, false);
    add_flops(2 * (d.batch * d.m * d.k * d.n) as u64);
    let out = Tensor::from_vec(d.out_shape.clone(), out)?;

    let (av, bv) = (a.value().clone(), b.value().clone());
    let (ta, tb) = (a.is_tracked(), b.is_tracked());
    let op = if b_t { "matmul_nt" } else { "matmul" };
    record(op, &[a, b], out, move |g| {
        let Dims { batch, m, k, n, .. } = d;
        let gd = g.data();
        let ga = if ta {
            // dA = dC * op(B)^T
            let mut ga = alloc::zeroed::<T>(batch * m * k)?;
            let lg = MatLayout::dense(m, n, false, true);
            let lbt = if b_t {
                MatLayout::dense(n, k, false, batched)
            } else {
                MatLayout::dense(k, n, true, batched)
            };
            gemm_batched(batch, m, n, k, gd, lg, bv.data(), lbt, &mut ga, false);
            Some(Tensor::from_vec(av.shape().to_vec(), ga)?)
        } else {
            None
        };
        let gb = if tb {
            let mut gb = alloc::zeroed::<T>(bv.numel())?;
            if b_t {
                // dB = dC^T * A, shape [n, k]
                let lgt = MatLayout::dense(m, n, true, true);
                let la = MatLayout::dense(m, k, false, true);
                if batched {
                    gemm_batched(batch, n, m, k, gd, lgt, av.data(), la, &mut gb, false);
                } else {
                    gemm_batched(1, n, m, k, gd, lgt, av.data(), la, &mut gb, false);
                }
            } else {
                // dB = A^T * dC, shape [k, n]
                let lat = MatLayout::dense(m, k, true, true);
                let lg = MatLayout::dense(m, n, false, true);
                if batched {
                    gemm_batched(batch, k, m, n, av.data(), lat, gd, lg, &mut gb, false);
                } else {
                    gemm_batched(1, k, m, n, av.data(), lat, gd, lg, &mut gb, false);
                }
            }
            Some(Tensor::from_vec(bv.shape().to_vec(), gb)?)
        } else {
            None
        };
        Ok(vec![ga, gb])
    })
}

impl<T: Element> Var<T> {
    /// `self @ rhs`. The right operand is either a `[k, n]` matrix applied to
    /// every row of `self`, or a batch with the same leading axes.
    pub fn matmul(&self, rhs: &Var<T>) -> Result<Var<T>> {
        product(self, rhs, false)
    }

    /// `self @ rhs^T` over the last two axes of `rhs`.
    pub fn matmul_t(&self, rhs: &Var<T>) -> Result<Var<T>> {
        product(self, rhs, true)
    }
}
