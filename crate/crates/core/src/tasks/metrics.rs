//! Evaluation metrics and bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// `2|P ∩ T| / (|P| + |T|)` for one class; 1 when both are empty.
pub fn dice(pred: &[u32], truth: &[u32], class_id: u32) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid("dice", format!("extent mismatch: {} vs {}", pred.len(), truth.len())));
    }
    let (mut inter, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(truth) {
        let (ia, ib) = (a == class_id, b == class_id);
        p += ia as usize;
        t += ib as usize;
        inter += (ia && ib) as usize;
    }
    Ok(if p + t == 0 { 1.0 } else { 2.0 * inter as f64 / (p + t) as f64 })
}

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Windowed SSIM with a 7-wide uniform window over every axis of
/// `extents`, averaged over all valid window positions. The dynamic range
/// `L` is that of `y`.
pub fn ssim(x: &[f64], y: &[f64], extents: &[usize]) -> Result<f64> {
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    ssim_with_range(x, y, extents, range)
}

/// [`ssim`] with an explicit dynamic range; symmetric in `x` and `y`.
pub fn ssim_with_range(x: &[f64], y: &[f64], extents: &[usize], range: f64) -> Result<f64> {
    let n: usize = extents.iter().product();
    if x.len() != n || y.len() != n {
        return Err(Error::invalid("ssim", format!("buffers of {} and {} for extents {extents:?}", x.len(), y.len())));
    }
    if extents.is_empty() || extents.iter().any(|&e| e < SSIM_WINDOW) {
        return Err(Error::invalid("ssim", format!("window {SSIM_WINDOW} is larger than image {extents:?}")));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
    let sums: Vec<(Vec<f64>, Vec<usize>)> = [x, y, &xx[..], &yy[..], &xy[..]]
        .iter()
        .map(|buf| box_sums(buf, extents, SSIM_WINDOW))
        .collect();
    let count = SSIM_WINDOW.pow(extents.len() as u32) as f64;
    let windows = sums[0].0.len();
    let mut total = 0.0;
    for w in 0..windows {
        let mx = sums[0].0[w] / count;
        let my = sums[1].0[w] / count;
        let vx = sums[2].0[w] / count - mx * mx;
        let vy = sums[3].0[w] / count - my * my;
        let cov = sums[4].0[w] / count - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / windows as f64)
}

/// Sums over every `w`-wide window (valid positions only), one axis at a
/// time with running sums.
fn box_sums(data: &[f64], extents: &[usize], w: usize) -> (Vec<f64>, Vec<usize>) {
    let mut cur = data.to_vec();
    let mut ext = extents.to_vec();
    for axis in 0..ext.len() {
        let len = ext[axis];
        let out_len = len - w + 1;
        let inner: usize = ext[axis + 1..].iter().product();
        let outer: usize = ext[..axis].iter().product();
        let mut next = vec![0.0; outer * out_len * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| cur[(o * len + k) * inner + i];
                let mut s: f64 = (0..w).map(at).sum();
                next[(o * out_len) * inner + i] = s;
                for k in 1..out_len {
                    s += at(k + w - 1) - at(k - 1);
                    next[(o * out_len + k) * inner + i] = s;
                }
            }
        }
        cur = next;
        ext[axis] = out_len;
    }
    (cur, ext)
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (rank-sum form of the Mann-Whitney statistic).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("auroc", "scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("auroc", "NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auroc", "need at least one positive and one negative label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Percentile bootstrap interval of `metric` over `samples`.
pub fn bootstrap_ci<S: Clone>(
    samples: &[S],
    metric: impl Fn(&[S]) -> f64,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("bootstrap_ci", "empty sample set"));
    }
    if n_boot == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("bootstrap_ci", format!("n_boot {n_boot}, level {level}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::with_capacity(samples.len());
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|_| {
            buf.clear();
            buf.extend((0..samples.len()).map(|_| samples[rng.random_range(0..samples.len())].clone()));
            metric(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&stats, alpha), percentile(&stats, 1.0 - alpha)))
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
