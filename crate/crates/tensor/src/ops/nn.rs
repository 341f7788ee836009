use crate::alloc;
use crate::tape::record;
use crate::{Element, Error, Result, Tensor, Var};

fn axis_split(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::invalid(op, format!("axis {axis} of {shape:?}")));
    }
    let len = shape[axis];
    if len == 0 {
        return Err(Error::invalid(op, "empty axis"));
    }
    Ok((shape[..axis].iter().product(), len, shape[axis + 1..].iter().product()))
}

/// Softmax over `len` entries spaced `stride` apart, subtracting the max.
fn softmax_strided<T: Element>(x: &[T], y: &mut [T], len: usize, stride: usize) {
    let mut max = T::neg_infinity();
    for i in 0..len {
        max = max.max(x[i * stride]);
    }
    let mut sum = T::zero();
    for i in 0..len {
        let e = (x[i * stride] - max).exp();
        y[i * stride] = e;
        sum += e;
    }
    let inv = sum.recip();
    for i in 0..len {
        y[i * stride] *= inv;
    }
}

fn softmax_backward<T: Element>(y: &Tensor<T>, g: &Tensor<T>, outer: usize, len: usize, inner: usize) -> Result<Tensor<T>> {
    let (yd, gd) = (y.data(), g.data());
    let mut gx = alloc::zeroed::<T>(y.numel())?;
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = T::zero();
            for a in 0..len {
                dot += yd[base + a * inner] * gd[base + a * inner];
            }
            for a in 0..len {
                let j = base + a * inner;
                gx[j] = yd[j] * (gd[j] - dot);
            }
        }
    }
    Tensor::from_vec(y.shape().to_vec(), gx)
}

impl<T: Element> Var<T> {
    pub fn softmax(&self, axis: usize) -> Result<Var<T>> {
        let (outer, len, inner) = axis_split(self.shape(), axis, "softmax")?;
        let x = self.value().data();
        let mut y = alloc::zeroed::<T>(x.len())?;
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                softmax_strided(&x[base..], &mut y[base..], len, inner);
            }
        }
        let y = Tensor::from_vec(self.shape().to_vec(), y)?;
        let saved = y.clone();
        record("softmax", &[self], y, move |g| {
            Ok(vec![Some(softmax_backward(&saved, g, outer, len, inner)?)])
        })
    }

    /// `softmax(self + bias)` over the last axis.
    ///
    /// `bias` has shape `[m, .., len]` where `m` divides the leading extent
    /// of `self`; consecutive groups of `self.shape()[0] / m` slices share
    /// one bias slice. Bias entries may be `-inf`. No gradient flows to
    /// `bias`.
    pub fn softmax_masked(&self, bias: &Tensor<T>) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let rank = shape.len();
        let bad = || Error::shape("softmax_masked", format!("scores {shape:?} with bias {:?}", bias.shape()));
        if rank < 2 || bias.rank() != rank || bias.shape()[1..] != shape[1..] {
            return Err(bad());
        }
        let m = bias.shape()[0];
        if m == 0 || shape[0] % m != 0 {
            return Err(bad());
        }
        let group = shape[0] / m;
        let len = shape[rank - 1];
        let slice: usize = shape[1..].iter().product();
        let x = self.value().data();
        let b = bias.data();
        let mut y = alloc::zeroed::<T>(x.len())?;
        let mut row = vec![T::zero(); len];
        for lead in 0..shape[0] {
            let bbase = (lead / group) * slice;
            let xbase = lead * slice;
            for r in 0..slice / len {
                let xo = xbase + r * len;
                let bo = bbase + r * len;
                for j in 0..len {
                    row[j] = x[xo + j] + b[bo + j];
                }
                softmax_strided(&row, &mut y[xo..xo + len], len, 1);
            }
        }
        let y = Tensor::from_vec(shape.clone(), y)?;
        let saved = y.clone();
        let outer = y.numel() / len;
        record("softmax", &[self], y, move |g| {
            Ok(vec![Some(softmax_backward(&saved, g, outer, len, 1)?)])
        })
    }

    /// Numerically stable log-softmax over the last axis.
    pub fn log_softmax(&self) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let (outer, len, _) = axis_split(&shape, shape.len().saturating_sub(1), "log_softmax")?;
        let x = self.value().data();
        let mut y = alloc::zeroed::<T>(x.len())?;
        for o in 0..outer {
            let row = &x[o * len..(o + 1) * len];
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            for j in 0..len {
                y[o * len + j] = row[j] - lse;
            }
        }
        let y = Tensor::from_vec(shape, y)?;
        let saved = y.clone();
        record("log_softmax", &[self], y, move |g| {
            let (yd, gd) = (saved.data(), g.data());
            let mut gx = alloc::zeroed::<T>(yd.len())?;
            for o in 0..outer {
                let gs: T = gd[o * len..(o + 1) * len].iter().copied().sum();
                for j in 0..len {
                    let i = o * len + j;
                    gx[i] = gd[i] - yd[i].exp() * gs;
                }
            }
            Ok(vec![Some(Tensor::from_vec(saved.shape().to_vec(), gx)?)])
        })
    }

    /// Normalizes over the last axis: `(x - mean) / sqrt(var + eps) * gamma + beta`
    /// with the population variance.
    pub fn layer_norm(&self, gamma: &Var<T>, beta: &Var<T>, eps: f64) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let d = *shape.last().ok_or_else(|| Error::invalid("layer_norm", "rank 0 input"))?;
        if d == 0 {
            return Err(Error::invalid("layer_norm", "last axis has extent 0"));
        }
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!("gamma {:?} / beta {:?} for width {d}", gamma.shape(), beta.shape()),
            ));
        }
        let rows = self.numel() / d;
        let x = self.value().data();
        let (gm, bt) = (gamma.value().data(), beta.value().data());
        let eps = T::c(eps);
        let dn = T::c(d as f64);
        let mut xhat = alloc::zeroed::<T>(x.len())?;
        let mut y = alloc::zeroed::<T>(x.len())?;
        let mut rstd = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let rs = (var + eps).sqrt().recip();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gm[j] + bt[j];
            }
        }
        let y = Tensor::from_vec(shape.clone(), y)?;
        let xhat = Tensor::from_vec(shape, xhat)?;
        let gamma_v = gamma.value().clone();
        record("layer_norm", &[self, gamma, beta], y, move |g| {
            let (gd, hd, gm) = (g.data(), xhat.data(), gamma_v.data());
            let mut gx = alloc::zeroed::<T>(gd.len())?;
            let mut ggamma = vec![T::zero(); d];
            let mut gbeta = vec![T::zero(); d];
            let mut dh = vec![T::zero(); d];
            for r in 0..rows {
                let o = r * d;
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for j in 0..d {
                    ggamma[j] += gd[o + j] * hd[o + j];
                    gbeta[j] += gd[o + j];
                    dh[j] = gd[o + j] * gm[j];
                    s1 += dh[j];
                    s2 += dh[j] * hd[o + j];
                }
                for j in 0..d {
                    gx[o + j] = rstd[r] * (dh[j] - (s1 + hd[o + j] * s2) / dn);
                }
            }
            Ok(vec![
                Some(Tensor::from_vec(xhat.shape().to_vec(), gx)?),
                Some(Tensor::from_vec([d], ggamma)?),
                Some(Tensor::from_vec([d], gbeta)?),
            ])
        })
    }
}
