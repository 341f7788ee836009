use crate::alloc;
use crate::fft::{conv_len, fft_flops, Complex, FftPlan};
use crate::instrument::add_flops;
use crate::tape::record;
use crate::{Element, Error, Result, Tensor, Var};

/// Splits `[.., n, c]` into (batch, n, c).
fn seq_dims(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape(op, format!("expected [.., n, c], got {shape:?}")));
    }
    let r = shape.len();
    Ok((shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1]))
}

/// FLOPs of [`Var::fft_conv`] for `batch` sequences of length `n` with `c` channels.
pub fn fft_conv_flops(batch: usize, n: usize, c: usize) -> u64 {
    let nf = conv_len(n);
    let per_filter = fft_flops(nf);
    let per_column = 2 * fft_flops(nf) + 6 * nf as u64;
    c as u64 * per_filter + (batch * c) as u64 * per_column
}

/// FLOPs of [`Var::depthwise_conv1d`].
pub fn depthwise_conv_flops(batch: usize, n: usize, c: usize, k: usize) -> u64 {
    2 * (batch * n * c * k) as u64
}

struct Spectra {
    plan: FftPlan,
    buf: Vec<Complex>,
}

impl Spectra {
    fn new(n: usize) -> Result<Self> {
        let plan = FftPlan::new(conv_len(n))?;
        let len = plan.len();
        Ok(Spectra { plan, buf: vec![Complex::ZERO; len] })
    }

    /// Spectrum of column `ch` of an `[n, c]` block starting at `base`.
    fn column<T: Element>(&mut self, data: &[T], base: usize, n: usize, c: usize, ch: usize) -> Vec<Complex> {
        self.buf.fill(Complex::ZERO);
        for t in 0..n {
            self.buf[t].re = data[base + t * c + ch].f64();
        }
        self.plan.forward(&mut self.buf);
        self.buf.clone()
    }

    /// Inverse transform of `a * b` (or `a * conj(b)`), first `n` samples
    /// written (or added) to column `ch` of `out`.
    #[allow(clippy::too_many_arguments)]
    fn product_into<T: Element>(
        &mut self,
        a: &[Complex],
        b: &[Complex],
        correlate: bool,
        out: &mut [T],
        base: usize,
        n: usize,
        c: usize,
        ch: usize,
        accumulate: bool,
    ) {
        for ((dst, x), y) in self.buf.iter_mut().zip(a).zip(b) {
            *dst = x.mul(if correlate { y.conj() } else { *y });
        }
        self.plan.inverse(&mut self.buf);
        for t in 0..n {
            let v = T::c(self.buf[t].re);
            let o = &mut out[base + t * c + ch];
            if accumulate {
                *o += v;
            } else {
                *o = v;
            }
        }
    }
}

impl<T: Element> Var<T> {
    /// Per-channel causal convolution along the sequence axis:
    /// `y[b, t, ch] = sum_{s<=t} h[s, ch] * u[b, t-s, ch]`.
    ///
    /// `self` is `[.., n, c]` and `h` is `[n, c]`, shared across the batch.
    /// Both are zero padded to a power of two at least `2n - 1` so the
    /// circular product realizes the linear convolution.
    pub fn fft_conv(&self, h: &Var<T>) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let (batch, n, c) = seq_dims(&shape, "fft_linear_conv")?;
        if h.shape() != [n, c] {
            return Err(Error::shape(
                "fft_linear_conv",
                format!("filter {:?} for input {shape:?} (length mismatch)", h.shape()),
            ));
        }
        let mut out = alloc::zeroed::<T>(batch * n * c)?;
        if n > 0 {
            let mut sp = Spectra::new(n)?;
            let (ud, hd) = (self.value().data(), h.value().data());
            for ch in 0..c {
                let hs = sp.column(hd, 0, n, c, ch);
                for b in 0..batch {
                    let us = sp.column(ud, b * n * c, n, c, ch);
                    sp.product_into(&us, &hs, false, &mut out, b * n * c, n, c, ch, false);
                }
            }
        }
        add_flops(fft_conv_flops(batch, n, c));
        let out = Tensor::from_vec(shape.clone(), out)?;
        let (uv, hv) = (self.value().clone(), h.value().clone());
        let (tu, th) = (self.is_tracked(), h.is_tracked());
        record("fft_linear_conv", &[self, h], out, move |g| {
            let mut gu = if tu { alloc::zeroed::<T>(uv.numel())? } else { Vec::new() };
            let mut gh = if th { alloc::zeroed::<T>(hv.numel())? } else { Vec::new() };
            if n > 0 {
                let mut sp = Spectra::new(n)?;
                let (ud, hd, gd) = (uv.data(), hv.data(), g.data());
                for ch in 0..c {
                    let hs = sp.column(hd, 0, n, c, ch);
                    for b in 0..batch {
                        let base = b * n * c;
                        let gs = sp.column(gd, base, n, c, ch);
                        if tu {
                            sp.product_into(&gs, &hs, true, &mut gu, base, n, c, ch, false);
                        }
                        if th {
                            let us = sp.column(ud, base, n, c, ch);
                            sp.product_into(&gs, &us, true, &mut gh, 0, n, c, ch, true);
                        }
                    }
                }
            }
            Ok(vec![
                if tu { Some(Tensor::from_vec(uv.shape().to_vec(), gu)?) } else { None },
                if th { Some(Tensor::from_vec([n, c], gh)?) } else { None },
            ])
        })
    }

    /// Depthwise convolution along the sequence axis with symmetric zero
    /// padding (`k` odd, output length = input length). `self` is
    /// `[.., n, c]`, `w` is `[k, c]`:
    /// `y[t, ch] = sum_j w[j, ch] * x[t + j - k/2, ch]`.
    pub fn depthwise_conv1d(&self, w: &Var<T>) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let (batch, n, c) = seq_dims(&shape, "depthwise_conv1d")?;
        if w.rank() != 2 || w.shape()[1] != c || w.shape()[0] % 2 == 0 {
            return Err(Error::shape(
                "depthwise_conv1d",
                format!("weight {:?} for input {shape:?} (need [odd k, {c}])", w.shape()),
            ));
        }
        let k = w.shape()[0];
        let p = k / 2;
        let (xd, wd) = (self.value().data(), w.value().data());
        let mut out = alloc::zeroed::<T>(xd.len())?;
        for b in 0..batch {
            let base = b * n * c;
            for t in 0..n {
                let o = &mut out[base + t * c..base + (t + 1) * c];
                for j in 0..k {
                    let src = t + j;
                    if src < p || src - p >= n {
                        continue;
                    }
                    let xi = &xd[base + (src - p) * c..base + (src - p + 1) * c];
                    let wj = &wd[j * c..(j + 1) * c];
                    for ((o, &x), &wv) in o.iter_mut().zip(xi).zip(wj) {
                        *o += x * wv;
                    }
                }
            }
        }
        add_flops(depthwise_conv_flops(batch, n, c, k));
        let out = Tensor::from_vec(shape.clone(), out)?;
        let (xv, wv) = (self.value().clone(), w.value().clone());
        record("depthwise_conv1d", &[self, w], out, move |g| {
            let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
            let mut gx = alloc::zeroed::<T>(xd.len())?;
            let mut gw = alloc::zeroed::<T>(wd.len())?;
            for b in 0..batch {
                let base = b * n * c;
                for t in 0..n {
                    let go = &gd[base + t * c..base + (t + 1) * c];
                    for j in 0..k {
                        let src = t + j;
                        if src < p || src - p >= n {
                            continue;
                        }
                        let xo = base + (src - p) * c;
                        for ch in 0..c {
                            gx[xo + ch] += go[ch] * wd[j * c + ch];
                            gw[j * c + ch] += go[ch] * xd[xo + ch];
                        }
                    }
                }
            }
            Ok(vec![
                Some(Tensor::from_vec(xv.shape().to_vec(), gx)?),
                Some(Tensor::from_vec(wv.shape().to_vec(), gw)?),
            ])
        })
    }
}
