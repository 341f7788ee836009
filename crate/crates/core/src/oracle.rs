//! Straightforward reference implementations used to cross-check the
//! optimized code paths (tests, `selftest`, acceptance runs).

use mixerbench_tensor::gradcheck::{self, GradCheck};
use mixerbench_tensor::{Element, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mixers::{Mixer, MixerKind};
use crate::params::{Bound, Builder, Params};
use crate::Result;

/// `y[t] = sum_{s<=t} h[s] u[t-s]` by the quadratic double loop.
pub fn direct_causal_conv(u: &[f64], h: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|t| (0..=t).map(|s| h[s] * u[t - s]).sum())
        .collect()
}

/// Multi-head attention for one `[n, d]` sequence, row by row with
/// explicit softmax weights. Weight matrices are `[d, d]` row-major.
pub fn attention_loop(x: &[f64], n: usize, d: usize, heads: usize, w: [&[f64]; 4]) -> Vec<f64> {
    let proj = |m: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| x[i * d + k] * m[k * d + j]).sum();
            }
        }
        out
    };
    let (q, k, v) = (proj(w[0]), proj(w[1]), proj(w[2]));
    let hd = d / heads;
    let mut y = vec![0.0; n * d];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..hd).map(|c| q[i * d + off + c] * k[j * d + off + c]).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..hd {
                y[i * d + off + c] = (0..n).map(|j| e[j] / z * v[j * d + off + c]).sum();
            }
        }
    }
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|c| y[i * d + c] * w[3][c * d + j]).sum();
        }
    }
    out
}

/// Gradient check of a closure returning the crate's result type.
pub fn grad_check(
    inputs: &[Tensor<f64>],
    step: f64,
    f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>,
) -> Result<GradCheck> {
    Ok(gradcheck::check(inputs, step, |v| {
        f(v).map_err(|e| mixerbench_tensor::Error::Invalid {
            op: "grad_check",
            detail: e.to_string(),
        })
    })?)
}

/// Finite-difference check of a full mixer on a random `[1, n, d]` input,
/// differentiating `sum(mixer(x))` with respect to the input and every
/// parameter.
pub fn mixer_grad_check(kind: MixerKind, n: usize, d: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::new();
    let mixer = Mixer::new(&mut Builder::new(&mut params, &mut rng), kind, d, 2)?;
    // Randomize biases so every path carries signal. Scan step sizes are
    // pushed to roughly 0.1..0.3: at the default init (down to 1e-3) the
    // gradients of A shrink toward the finite-difference noise floor.
    let names: Vec<String> = params.iter().map(|(name, _)| name.to_string()).collect();
    for (id, name) in params.ids().collect::<Vec<_>>().into_iter().zip(names) {
        let range = if name.ends_with("dt_proj.bias") {
            (-2.5, -1.0)
        } else if name.ends_with("bias") {
            (-0.5, 0.5)
        } else {
            continue;
        };
        let shape = params.get(id).shape().to_vec();
        params.set(id, Tensor::uniform(shape, range.0, range.1, &mut rng)?);
    }
    let x = Tensor::randn([1, n, d], 1.0, &mut rng)?;
    let mut inputs = vec![x];
    inputs.extend(params.values().iter().cloned());
    grad_check(&inputs, 1e-5, |v| {
        let bound = Bound::from_vars(v[1..].to_vec());
        Ok(mixer.forward(&bound, &v[0], None)?.sum()?)
    })
}

/// Largest absolute difference between two equally long slices.
pub fn max_abs_diff<T: Element>(a: &[T], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.f64() - y).abs()).fold(0.0, f64::max)
}

/// SSIM of two 2D images by visiting every 7x7 window and computing its
/// means, variances and covariance directly.
pub fn ssim_2d_loop(x: &[f64], y: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = 7;
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let m = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let at = |buf: &[f64], a: usize, b: usize| buf[(i + a) * w + j + b];
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    mx += at(x, a, b);
                    my += at(y, a, b);
                }
            }
            mx /= m;
            my /= m;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for a in 0..k {
                for b in 0..k {
                    let (dx, dy) = (at(x, a, b) - mx, at(y, a, b) - my);
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= m;
            vy /= m;
            cov /= m;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Fraction of positive/negative pairs where the positive scores higher,
/// ties counting one half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &pi) in labels.iter().enumerate() {
        for (j, &pj) in labels.iter().enumerate() {
            if pi && !pj {
                pairs += 1;
                wins += match scores[i].partial_cmp(&scores[j]) {
                    Some(std::cmp::Ordering::Greater) => 1.0,
                    Some(std::cmp::Ordering::Equal) => 0.5,
                    _ => 0.0,
                };
            }
        }
    }
    wins / pairs as f64
}
