//! Iterative radix-2 FFT and the FFT-based causal convolution used by the
//! long-convolution mixer.

use std::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    #[inline]
    pub fn conj(self) -> Complex {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }

    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

/// Precomputed twiddles and bit-reversal permutation for one length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex>,
    rev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid("fft", format!("length {n} is not a power of two")));
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(FftPlan { n, twiddles, rev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn transform(&self, buf: &mut [Complex], inverse: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n, "buffer length must match the plan");
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half].mul(w);
                    buf[start + k] = a.add(b);
                    buf[start + k + half] = a.sub(b);
                }
            }
            len <<= 1;
        }
        if inverse {
            let s = 1.0 / n as f64;
            for v in buf.iter_mut() {
                v.re *= s;
                v.im *= s;
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex]) {
        self.transform(buf, false);
    }

    /// Inverse transform including the `1/n` normalization.
    pub fn inverse(&self, buf: &mut [Complex]) {
        self.transform(buf, true);
    }
}

/// FLOPs of one length-`n` transform: `n/2 * log2(n)` butterflies, each a
/// complex multiply (6) and two complex additions (4).
pub fn fft_flops(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    5 * n as u64 * n.trailing_zeros() as u64
}

/// Transform length used to realize a linear convolution of two length-`n`
/// sequences: the next power of two at least `2n - 1`.
pub fn conv_len(n: usize) -> usize {
    (2 * n).saturating_sub(1).max(1).next_power_of_two()
}

/// Half spectrum (`n/2 + 1` bins) of a real sequence of power-of-two length.
pub fn rfft(x: &[f64]) -> Result<Vec<Complex>> {
    let plan = FftPlan::new(x.len())?;
    let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    buf.truncate(x.len() / 2 + 1);
    Ok(buf)
}

/// Inverse of [`rfft`] for a real sequence of length `n`.
pub fn irfft(half: &[Complex], n: usize) -> Result<Vec<f64>> {
    if half.len() != n / 2 + 1 {
        return Err(Error::invalid("irfft", format!("{} bins for length {n}", half.len())));
    }
    let plan = FftPlan::new(n)?;
    let mut buf = vec![Complex::ZERO; n];
    buf[..half.len()].copy_from_slice(half);
    for k in half.len()..n {
        buf[k] = half[n - k].conj();
    }
    plan.inverse(&mut buf);
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Causal linear convolution `y[t] = sum_{s<=t} h[s] u[t-s]` of two
/// equal-length sequences, truncated to `n` outputs.
pub fn linear_conv(u: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if u.len() != h.len() {
        return Err(Error::shape(
            "fft_linear_conv",
            format!("input length {} vs filter length {}", u.len(), h.len()),
        ));
    }
    let n = u.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let plan = FftPlan::new(conv_len(n))?;
    let mut scratch = ConvScratch::new(plan.len());
    let mut out = vec![0.0; n];
    scratch.load(0, u.iter().copied());
    scratch.load(1, h.iter().copied());
    scratch.convolve(&plan, false, &mut out);
    Ok(out)
}

/// Reusable buffers for a single spectral product.
pub(crate) struct ConvScratch {
    a: Vec<Complex>,
    b: Vec<Complex>,
}

impl ConvScratch {
    pub(crate) fn new(n: usize) -> Self {
        ConvScratch {
            a: vec![Complex::ZERO; n],
            b: vec![Complex::ZERO; n],
        }
    }

    /// Loads a zero-padded real sequence into operand `slot` (0 or 1).
    pub(crate) fn load(&mut self, slot: usize, values: impl Iterator<Item = f64>) {
        let buf = if slot == 0 { &mut self.a } else { &mut self.b };
        buf.fill(Complex::ZERO);
        for (dst, v) in buf.iter_mut().zip(values) {
            dst.re = v;
        }
    }

    /// Writes the first `out.len()` samples of `a * b` (convolution) or of
    /// the correlation `a * conj(b)` into `out`.
    pub(crate) fn convolve(&mut self, plan: &FftPlan, correlate: bool, out: &mut [f64]) {
        plan.forward(&mut self.a);
        plan.forward(&mut self.b);
        for (x, y) in self.a.iter_mut().zip(&self.b) {
            *x = x.mul(if correlate { y.conj() } else { *y });
        }
        plan.inverse(&mut self.a);
        for (o, c) in out.iter_mut().zip(&self.a) {
            *o = c.re;
        }
    }
}
