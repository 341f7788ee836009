//! Random affine resampling and brightness jitter.

use mixerbench_tensor::{Element, Tensor};
use rand::Rng;

use super::sample::{TaskSample, Target};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Rotation drawn from `±max_rotation_deg` in the plane of the first
    /// two spatial axes.
    pub max_rotation_deg: f64,
    /// Per-axis shift as a fraction of the extent.
    pub max_translation: f64,
    /// Isotropic scale drawn from `1 ± max_scale`.
    pub max_scale: f64,
    /// Multiplicative input brightness range; `None` disables jitter.
    pub jitter: Option<(f64, f64)>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 10.0,
            max_translation: 0.05,
            max_scale: 0.1,
            jitter: Some((0.9, 1.1)),
        }
    }
}

impl AugmentConfig {
    /// Affine only: intensities of denoising inputs encode the SNR.
    pub fn without_jitter() -> Self {
        AugmentConfig {
            jitter: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub rotation_rad: f64,
    /// Per spatial axis, as a fraction of the extent.
    pub translation: Vec<f64>,
    pub scale: f64,
    pub jitter: f64,
}

impl AffineParams {
    pub fn identity(rank: usize) -> Self {
        AffineParams {
            rotation_rad: 0.0,
            translation: vec![0.0; rank],
            scale: 1.0,
            jitter: 1.0,
        }
    }

    pub fn sample(cfg: &AugmentConfig, rank: usize, rng: &mut impl Rng) -> Self {
        let sym = |rng: &mut dyn rand::RngCore, m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let rotation_rad = sym(rng, cfg.max_rotation_deg).to_radians();
        let translation = (0..rank).map(|_| sym(rng, cfg.max_translation)).collect();
        let scale = 1.0 + sym(rng, cfg.max_scale);
        let jitter = match cfg.jitter {
            Some((lo, hi)) if hi > lo => rng.random_range(lo..=hi),
            Some((lo, _)) => lo,
            None => 1.0,
        };
        AffineParams {
            rotation_rad,
            translation,
            scale,
            jitter,
        }
    }

    /// Source coordinate sampled for output pixel `y`.
    fn source(&self, y: &[f64], extents: &[usize]) -> Vec<f64> {
        let center: Vec<f64> = extents.iter().map(|&e| (e as f64 - 1.0) / 2.0).collect();
        let mut d: Vec<f64> = y
            .iter()
            .zip(&center)
            .zip(extents.iter().zip(&self.translation))
            .map(|((v, c), (&e, t))| v - c - t * e as f64)
            .collect();
        let (s, c) = self.rotation_rad.sin_cos();
        let (a, b) = (d[0], d[1]);
        d[0] = c * a + s * b;
        d[1] = -s * a + c * b;
        d.iter().zip(&center).map(|(v, c)| v / self.scale + c).collect()
    }
}

/// Resamples one `extents`-shaped channel; linear interpolation or
/// nearest neighbour, clamping at the border.
fn warp<V: Copy>(
    data: &[V],
    extents: &[usize],
    params: &AffineParams,
    nearest: bool,
    lerp: impl Fn(&[(usize, f64)]) -> V,
) -> Vec<V> {
    let n = data.len();
    let rank = extents.len();
    let mut strides = vec![1; rank];
    for a in (0..rank.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * extents[a + 1];
    }
    (0..n)
        .map(|i| {
            let y: Vec<f64> = crate::mixers::unravel(i, extents).into_iter().map(|c| c as f64).collect();
            let x = params.source(&y, extents);
            let clamped: Vec<f64> = x
                .iter()
                .zip(extents)
                .map(|(v, &e)| v.clamp(0.0, e as f64 - 1.0))
                .collect();
            if nearest {
                let idx: usize = clamped.iter().zip(&strides).map(|(v, s)| v.round() as usize * s).sum();
                return data[idx];
            }
            // 2^rank corners with their weights
            let mut corners = vec![(0usize, 1.0f64)];
            for (a, v) in clamped.iter().enumerate() {
                let lo = v.floor() as usize;
                let hi = (lo + 1).min(extents[a] - 1);
                let f = v - lo as f64;
                corners = corners
                    .into_iter()
                    .flat_map(|(idx, w)| [(idx + lo * strides[a], w * (1.0 - f)), (idx + hi * strides[a], w * f)])
                    .collect();
            }
            lerp(&corners)
        })
        .collect()
}

fn warp_image<T: Element>(image: &Tensor<T>, params: &AffineParams, gain: f64) -> Tensor<T> {
    let extents = &image.shape()[1..];
    let plane: usize = extents.iter().product();
    let data = image.data();
    let mut out = Vec::with_capacity(data.len());
    for ch in data.chunks(plane.max(1)) {
        out.extend(warp(ch, extents, params, false, |corners| {
            let v: f64 = corners.iter().filter(|(_, w)| *w != 0.0).map(|(i, w)| ch[*i].f64() * w).sum();
            T::c(v * gain)
        }));
    }
    Tensor::from_vec(image.shape().to_vec(), out).expect("same shape")
}

/// Applies `params` to the input and, consistently, to a mask or clean
/// target. Brightness jitter touches the input only.
pub fn apply_augment<T: Element>(sample: &TaskSample<T>, params: &AffineParams) -> TaskSample<T> {
    let input = warp_image(&sample.input, params, params.jitter);
    let target = match &sample.target {
        Target::Mask { classes, data } => Target::Mask {
            classes: *classes,
            data: warp(data, sample.extents(), params, true, |_| unreachable!("nearest")),
        },
        Target::Clean(clean) => Target::Clean(warp_image(clean, params, 1.0)),
        Target::Label(l) => Target::Label(*l),
    };
    TaskSample {
        input,
        target,
        seed: sample.seed,
    }
}

pub fn augment<T: Element>(sample: &TaskSample<T>, cfg: &AugmentConfig, rng: &mut impl Rng) -> TaskSample<T> {
    let params = AffineParams::sample(cfg, sample.extents().len(), rng);
    apply_augment(sample, &params)
}
