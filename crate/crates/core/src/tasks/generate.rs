//! Seeded synthetic stand-ins for segmentation, denoising and
//! classification data. Every generator is a pure function of its
//! arguments.

use std::f64::consts::PI;

use mixerbench_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sample::{TaskSample, Target};
use crate::{Error, Result};

/// Independent random stream `stream` of a sample seed.
fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn check_extents(op: &'static str, extents: &[usize]) -> Result<()> {
    if !(2..=3).contains(&extents.len()) || extents.contains(&0) {
        return Err(Error::invalid(op, format!("extents {extents:?} must be 2D or 3D and nonempty")));
    }
    Ok(())
}

fn coords(i: usize, extents: &[usize]) -> Vec<f64> {
    crate::mixers::unravel(i, extents).into_iter().map(|c| c as f64).collect()
}

/// Sum of a few low-frequency plane waves, zero mean, RMS about `amp`.
fn smooth_field(rng: &mut ChaCha8Rng, extents: &[usize], terms: usize, amp: f64) -> Vec<f64> {
    let waves: Vec<(Vec<f64>, f64)> = (0..terms)
        .map(|_| {
            let k: Vec<f64> = extents
                .iter()
                .map(|&e| rng.random_range(-3i32..=3) as f64 / e as f64)
                .collect();
            (k, rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let scale = amp * (2.0 / terms.max(1) as f64).sqrt();
    let n: usize = extents.iter().product();
    (0..n)
        .map(|i| {
            let x = coords(i, extents);
            waves
                .iter()
                .map(|(k, phase)| (2.0 * PI * k.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + phase).cos())
                .sum::<f64>()
                * scale
        })
        .collect()
}

/// A randomly placed ellipse (optionally rotated, 2D), box (2D) or
/// axis-aligned ellipsoid (3D).
#[derive(Debug, Clone)]
struct Shape {
    center: Vec<f64>,
    radii: Vec<f64>,
    angle: f64,
    is_box: bool,
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, extents: &[usize], radius: (f64, f64), allow_box: bool) -> Shape {
        let radii: Vec<f64> = extents.iter().map(|_| rng.random_range(radius.0..=radius.1)).collect();
        let center = extents
            .iter()
            .zip(&radii)
            .map(|(&e, &r)| {
                let hi = (e as f64 - 1.0 - r).max(r);
                rng.random_range(r.min(hi)..=hi)
            })
            .collect();
        let angle = if extents.len() == 2 { rng.random_range(0.0..PI) } else { 0.0 };
        let is_box = allow_box && extents.len() == 2 && rng.random_bool(0.3);
        Shape {
            center,
            radii,
            angle,
            is_box,
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        let mut d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        if d.len() == 2 && !self.is_box {
            let (s, c) = self.angle.sin_cos();
            d = vec![c * d[0] + s * d[1], -s * d[0] + c * d[1]];
        }
        if self.is_box {
            d.iter().zip(&self.radii).all(|(v, r)| v.abs() <= *r)
        } else {
            d.iter().zip(&self.radii).map(|(v, r)| (v / r).powi(2)).sum::<f64>() <= 1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    /// Including background (class 0).
    pub num_classes: usize,
    /// Shape radii as fractions of the smallest extent.
    pub radius_range: (f64, f64),
    /// Relative frequency of each foreground class; controls imbalance.
    pub class_weights: Vec<f64>,
    /// Layouts are redrawn until the foreground fraction lands in this band.
    pub foreground_band: (f64, f64),
    pub noise_std: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            num_classes: 3,
            radius_range: (0.08, 0.2),
            class_weights: vec![1.0, 1.0],
            foreground_band: (0.05, 0.4),
            noise_std: 0.05,
        }
    }
}

const LAYOUT_ATTEMPTS: usize = 32;

pub fn gen_segmentation(seed: u64, extents: &[usize], num_shapes: usize) -> Result<TaskSample<f64>> {
    gen_segmentation_with(seed, extents, num_shapes, &SegmentationConfig::default())
}

pub fn gen_segmentation_with(
    seed: u64,
    extents: &[usize],
    num_shapes: usize,
    cfg: &SegmentationConfig,
) -> Result<TaskSample<f64>> {
    check_extents("gen_segmentation", extents)?;
    if cfg.num_classes < 2 || cfg.class_weights.len() != cfg.num_classes - 1 {
        return Err(Error::invalid("gen_segmentation", "need one weight per foreground class"));
    }
    let min_extent = *extents.iter().min().expect("nonempty") as f64;
    let radius = (cfg.radius_range.0 * min_extent, cfg.radius_range.1 * min_extent);
    if num_shapes > 0 && (min_extent < 8.0 || radius.0 < 1.0 || radius.1 < radius.0) {
        return Err(Error::invalid(
            "gen_segmentation",
            format!("extents {extents:?} are too small for shapes of radius {radius:?}"),
        ));
    }
    let mut rng = stream(seed, 0);
    let total: f64 = cfg.class_weights.iter().sum();
    let n: usize = extents.iter().product();
    let (band_lo, band_hi) = cfg.foreground_band;
    let mut best: Option<(f64, Vec<u32>)> = None;
    for _ in 0..LAYOUT_ATTEMPTS {
        let shapes: Vec<(Shape, u32)> = (0..num_shapes)
            .map(|_| {
                let mut u = rng.random_range(0.0..total);
                let mut class = cfg.class_weights.len();
                for (c, w) in cfg.class_weights.iter().enumerate() {
                    if u < *w {
                        class = c + 1;
                        break;
                    }
                    u -= w;
                }
                (Shape::random(&mut rng, extents, radius, true), class as u32)
            })
            .collect();
        let mask: Vec<u32> = (0..n)
            .map(|i| {
                let x = coords(i, extents);
                shapes.iter().rev().find(|(s, _)| s.contains(&x)).map_or(0, |(_, c)| *c)
            })
            .collect();
        let fraction = mask.iter().filter(|&&m| m != 0).count() as f64 / n as f64;
        let miss = (band_lo - fraction).max(fraction - band_hi).max(0.0);
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, mask));
        }
        if miss == 0.0 || num_shapes == 0 {
            break;
        }
    }
    let mask = best.expect("at least one layout").1;
    let texture = smooth_field(&mut stream(seed, 1), extents, 6, 0.15);
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::invalid("gen_segmentation", e.to_string()))?;
    let mut nrng = stream(seed, 2);
    let input: Vec<f64> = mask
        .iter()
        .zip(&texture)
        .map(|(&m, t)| t + 0.4 * m as f64 + noise.sample(&mut nrng))
        .collect();
    let shape: Vec<usize> = std::iter::once(1).chain(extents.iter().copied()).collect();
    Ok(TaskSample {
        input: Tensor::from_vec(shape, input)?,
        target: Target::Mask {
            classes: cfg.num_classes,
            data: mask,
        },
        seed,
    })
}

/// Additive white Gaussian noise that lowers a reference image's SNR by a
/// random ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_ratio_range: (f64, f64),
    /// SNR (signal RMS / noise std) of the reference image itself.
    pub base_snr: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            snr_ratio_range: (1.0, 40.0),
            base_snr: 50.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_ratio_range;
        if !(lo >= 1.0 && hi >= lo && self.base_snr > 0.0) {
            return Err(Error::invalid(
                "noise_spec",
                format!("need 1 <= lo <= hi and base_snr > 0, got {:?}, {}", self.snr_ratio_range, self.base_snr),
            ));
        }
        Ok(())
    }
}

/// Components of one denoising sample.
#[derive(Debug, Clone)]
pub struct DenoisingParts {
    /// Noise-free image content.
    pub structure: Vec<f64>,
    /// `structure` plus baseline noise at `base_snr`: the training target.
    pub reference: Vec<f64>,
    /// `reference` plus extra noise, so its SNR is `base_snr / ratio`.
    pub noisy: Vec<f64>,
    pub ratio: f64,
    pub signal_rms: f64,
}

pub fn denoising_ratio(seed: u64, noise: &NoiseSpec) -> Result<f64> {
    noise.validate()?;
    let (lo, hi) = noise.snr_ratio_range;
    Ok(if hi > lo { stream(seed, 0).random_range(lo..=hi) } else { lo })
}

pub fn denoising_parts(seed: u64, extents: &[usize], base_snr: f64, ratio: f64) -> Result<DenoisingParts> {
    check_extents("gen_denoising", extents)?;
    if ratio < 1.0 || base_snr <= 0.0 {
        return Err(Error::invalid("gen_denoising", format!("ratio {ratio} must be >= 1 and base_snr positive")));
    }
    let mut rng = stream(seed, 1);
    let n: usize = extents.iter().product();
    let min_extent = *extents.iter().min().expect("nonempty") as f64;
    let field = smooth_field(&mut rng, extents, 8, 0.15);
    let count = rng.random_range(3..=6);
    let blobs: Vec<(Shape, f64)> = (0..count)
        .map(|_| {
            let r = (0.1 * min_extent).max(1.0)..=(0.3 * min_extent).max(1.0);
            let s = Shape::random(&mut rng, extents, (*r.start(), *r.end()), false);
            (s, rng.random_range(0.2..0.8))
        })
        .collect();
    let structure: Vec<f64> = (0..n)
        .map(|i| {
            let x = coords(i, extents);
            let mut v = 0.3 + field[i];
            for (s, a) in &blobs {
                if s.contains(&x) {
                    v += a;
                }
            }
            v
        })
        .collect();
    let signal_rms = (structure.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if signal_rms == 0.0 {
        return Err(Error::invalid("gen_denoising", "degenerate all-zero clean image"));
    }
    let sigma0 = signal_rms / base_snr;
    let extra = sigma0 * (ratio * ratio - 1.0).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut nrng = stream(seed, 2);
    let reference: Vec<f64> = structure.iter().map(|v| v + sigma0 * unit.sample(&mut nrng)).collect();
    let noisy: Vec<f64> = reference.iter().map(|v| v + extra * unit.sample(&mut nrng)).collect();
    Ok(DenoisingParts {
        structure,
        reference,
        noisy,
        ratio,
        signal_rms,
    })
}

/// Noisy input with the reference image as target.
pub fn gen_denoising(seed: u64, extents: &[usize], noise: &NoiseSpec) -> Result<TaskSample<f64>> {
    let ratio = denoising_ratio(seed, noise)?;
    let parts = denoising_parts(seed, extents, noise.base_snr, ratio)?;
    let shape: Vec<usize> = std::iter::once(1).chain(extents.iter().copied()).collect();
    Ok(TaskSample {
        input: Tensor::from_vec(shape.clone(), parts.noisy)?,
        target: Target::Clean(Tensor::from_vec(shape, parts.reference)?),
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct ClassificationParts {
    pub sample: TaskSample<f64>,
    /// The same image without the anomaly.
    pub negative_twin: TaskSample<f64>,
    /// Support of the anomaly (all false for negatives).
    pub region: Vec<bool>,
}

pub fn classification_label(seed: u64, positive_rate: f64) -> Result<bool> {
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(Error::invalid(
            "gen_classification",
            format!("positive_rate {positive_rate} must lie in (0, 1)"),
        ));
    }
    Ok(stream(seed, 0).random_bool(positive_rate))
}

pub fn classification_parts(seed: u64, extents: &[usize], positive_rate: f64) -> Result<ClassificationParts> {
    check_extents("gen_classification", extents)?;
    let positive = classification_label(seed, positive_rate)?;
    let n: usize = extents.iter().product();
    let min_extent = *extents.iter().min().expect("nonempty") as f64;
    let mut rng = stream(seed, 1);
    let field = smooth_field(&mut rng, extents, 8, 0.2);
    let count = rng.random_range(2..=4);
    let organs: Vec<Shape> = (0..count)
        .map(|_| {
            let r = ((0.12 * min_extent).max(1.0), (0.3 * min_extent).max(1.0));
            Shape::random(&mut rng, extents, r, false)
        })
        .collect();
    let unit = Normal::new(0.0, 0.05).expect("normal");
    let mut nrng = stream(seed, 2);
    let background: Vec<f64> = (0..n)
        .map(|i| {
            let x = coords(i, extents);
            let inside = organs.iter().filter(|s| s.contains(&x)).count() as f64;
            0.2 + field[i] + 0.3 * inside + unit.sample(&mut nrng)
        })
        .collect();

    let sigma = (0.04 * min_extent).max(1.0);
    let mut arng = stream(seed, 3);
    let center: Vec<f64> = extents
        .iter()
        .map(|&e| {
            let lo = (3.0 * sigma).min(e as f64 / 2.0);
            arng.random_range(lo..=(e as f64 - 1.0 - lo).max(lo))
        })
        .collect();
    let mut region = vec![false; n];
    let mut input = background.clone();
    if positive {
        for i in 0..n {
            let x = coords(i, extents);
            let d2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum();
            if d2 <= (3.0 * sigma).powi(2) {
                region[i] = true;
                input[i] += 0.8 * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    let shape: Vec<usize> = std::iter::once(1).chain(extents.iter().copied()).collect();
    Ok(ClassificationParts {
        sample: TaskSample {
            input: Tensor::from_vec(shape.clone(), input)?,
            target: Target::Label(positive as u32),
            seed,
        },
        negative_twin: TaskSample {
            input: Tensor::from_vec(shape, background)?,
            target: Target::Label(0),
            seed,
        },
        region,
    })
}

pub fn gen_classification(seed: u64, extents: &[usize], positive_rate: f64) -> Result<TaskSample<f64>> {
    Ok(classification_parts(seed, extents, positive_rate)?.sample)
}
