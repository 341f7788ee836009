use crate::alloc;
use crate::kernels::{self, inverse_permutation, sum_to};
use crate::tape::record;
use crate::tensor::numel;
use crate::{Element, Error, Result, Tensor, Var};

/// Copies `src` (shape `src_shape`) into `dst` (shape `dst_shape`) with an
/// offset of `lo` along `axis`. Axes other than `axis` must agree.
fn copy_block<T: Element>(
    src: &[T],
    src_shape: &[usize],
    dst: &mut [T],
    dst_shape: &[usize],
    axis: usize,
    src_lo: usize,
    dst_lo: usize,
    len: usize,
) {
    let outer: usize = src_shape[..axis].iter().product();
    let inner: usize = src_shape[axis + 1..].iter().product();
    let (sa, da) = (src_shape[axis], dst_shape[axis]);
    for o in 0..outer {
        let s = (o * sa + src_lo) * inner;
        let d = (o * da + dst_lo) * inner;
        dst[d..d + len * inner].copy_from_slice(&src[s..s + len * inner]);
    }
}

impl<T: Element> Var<T> {
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<T>> {
        let out = self.value().reshape(shape)?;
        let orig = self.shape().to_vec();
        record("reshape", &[self], out, move |g| Ok(vec![Some(g.reshape(orig)?)]))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<T>> {
        let out = kernels::permute(self.value(), axes)?;
        let inv = inverse_permutation(axes);
        record("transpose", &[self], out, move |g| Ok(vec![Some(kernels::permute(g, &inv)?)]))
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Result<Var<T>> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::shape("t", format!("rank {r} has no matrix axes")));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(Error::invalid(
                "slice",
                format!("range {start}..{end} on axis {axis} of {shape:?}"),
            ));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = end - start;
        let mut out = alloc::zeroed::<T>(numel(&out_shape))?;
        copy_block(self.value().data(), &shape, &mut out, &out_shape, axis, start, 0, end - start);
        let out = Tensor::from_vec(out_shape.clone(), out)?;
        record("slice", &[self], out, move |g| {
            let mut gx = alloc::zeroed::<T>(numel(&shape))?;
            copy_block(g.data(), &out_shape, &mut gx, &shape, axis, 0, start, end - start);
            Ok(vec![Some(Tensor::from_vec(shape, gx)?)])
        })
    }

    /// Zero padding of `before`/`after` elements along `axis`.
    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid("pad", format!("axis {axis} of {shape:?}")));
        }
        let mut out_shape = shape.clone();
        out_shape[axis] += before + after;
        let mut out = alloc::zeroed::<T>(numel(&out_shape))?;
        copy_block(self.value().data(), &shape, &mut out, &out_shape, axis, 0, before, shape[axis]);
        let out = Tensor::from_vec(out_shape.clone(), out)?;
        record("pad", &[self], out, move |g| {
            let mut gx = alloc::zeroed::<T>(numel(&shape))?;
            copy_block(g.data(), &out_shape, &mut gx, &shape, axis, before, 0, shape[axis]);
            Ok(vec![Some(Tensor::from_vec(shape, gx)?)])
        })
    }

    pub fn concat(parts: &[Var<T>], axis: usize) -> Result<Var<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return Err(Error::invalid("concat", format!("axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = p.shape();
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut out = alloc::zeroed::<T>(numel(&out_shape))?;
        let mut lo = 0;
        let mut spans = Vec::with_capacity(parts.len());
        for p in parts {
            let len = p.shape()[axis];
            copy_block(p.value().data(), p.shape(), &mut out, &out_shape, axis, 0, lo, len);
            spans.push((p.shape().to_vec(), lo, len));
            lo += len;
        }
        let out = Tensor::from_vec(out_shape.clone(), out)?;
        let inputs: Vec<&Var<T>> = parts.iter().collect();
        record("concat", &inputs, out, move |g| {
            spans
                .into_iter()
                .map(|(shape, lo, len)| {
                    let mut gx = alloc::zeroed::<T>(numel(&shape))?;
                    copy_block(g.data(), &out_shape, &mut gx, &shape, axis, lo, 0, len);
                    Ok(Some(Tensor::from_vec(shape, gx)?))
                })
                .collect()
        })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Var<T>> {
        let out = kernels::broadcast_to(self.value(), shape)?;
        let orig = self.shape().to_vec();
        record("broadcast_to", &[self], out, move |g| Ok(vec![Some(sum_to(g, &orig)?)]))
    }

    /// Cyclic roll along `axis`: element `i` moves to `(i + shift) mod len`.
    pub fn roll(&self, axis: usize, shift: isize) -> Result<Var<T>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::invalid("roll", format!("axis {axis} of {:?}", self.shape())))?;
        if len == 0 {
            return Ok(self.clone());
        }
        let s = shift.rem_euclid(len as isize) as usize;
        if s == 0 {
            return Ok(self.clone());
        }
        let head = self.slice(axis, len - s, len)?;
        let tail = self.slice(axis, 0, len - s)?;
        Var::concat(&[head, tail], axis)
    }

    /// Rows of a `[vocab, d]` table selected by `ids`, giving `[ids.len(), d]`.
    pub fn embedding(&self, ids: &[usize]) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("embedding", format!("table must be rank 2, got {shape:?}")));
        }
        let (vocab, d) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::invalid("embedding", format!("id {bad} out of range {vocab}")));
        }
        let table = self.value().data();
        let mut out = alloc::zeroed::<T>(ids.len() * d)?;
        for (row, &id) in ids.iter().enumerate() {
            out[row * d..(row + 1) * d].copy_from_slice(&table[id * d..(id + 1) * d]);
        }
        let out = Tensor::from_vec([ids.len(), d], out)?;
        let ids = ids.to_vec();
        record("embedding", &[self], out, move |g| {
            let mut gt = alloc::zeroed::<T>(vocab * d)?;
            let gd = g.data();
            for (row, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    gt[id * d + j] += gd[row * d + j];
                }
            }
            Ok(vec![Some(Tensor::from_vec(shape, gt)?)])
        })
    }
}
