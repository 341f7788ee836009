//! Test-set metrics with bootstrap intervals.

use mixerbench_tensor::{Element, Var};

use super::train::Trainable;
use crate::params::Params;
use crate::tasks::{auroc, bootstrap_ci, dice, ssim, TaskSample, Target};
use crate::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `dice`, `ssim` or `auroc`.
    pub metric: &'static str,
    pub value: f64,
    pub ci: (f64, f64),
    /// The metric of the untouched input, for denoising.
    pub baseline: Option<f64>,
    pub samples: usize,
}

/// Mean foreground dice of `[K, E..]` logits against a mask.
fn mean_dice<T: Element>(logits: &[T], classes: usize, mask: &[u32]) -> Result<f64> {
    let pixels = mask.len();
    let pred: Vec<u32> = (0..pixels)
        .map(|p| {
            (0..classes)
                .max_by(|&a, &b| logits[a * pixels + p].f64().total_cmp(&logits[b * pixels + p].f64()))
                .unwrap_or(0) as u32
        })
        .collect();
    let mut total = 0.0;
    for c in 1..classes as u32 {
        total += dice(&pred, mask, c)?;
    }
    Ok(total / (classes - 1).max(1) as f64)
}

/// Evaluates a trained model on `samples`, which must share a target kind.
pub fn evaluate<T: Element, M: Trainable<T>>(
    model: &M,
    params: &Params<T>,
    samples: &[TaskSample<f64>],
    seed: u64,
) -> Result<EvalReport> {
    let first = samples.first().ok_or_else(|| Error::invalid("evaluate", "empty test set"))?;
    let bound = params.bind(None);
    let preds = samples
        .iter()
        .map(|s| Ok(model.predict(&bound, &Var::constant(s.input.cast::<T>()?))?.into_value()))
        .collect::<Result<Vec<_>>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    match &first.target {
        Target::Mask { .. } => {
            let scores = samples
                .iter()
                .zip(&preds)
                .map(|(s, p)| match &s.target {
                    Target::Mask { classes, data } => mean_dice(p.data(), *classes, data),
                    _ => Err(Error::invalid("evaluate", "mixed target kinds")),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalReport {
                metric: "dice",
                value: mean(&scores),
                ci: bootstrap_ci(&scores, mean, BOOTSTRAP_RESAMPLES, CONFIDENCE, seed)?,
                baseline: None,
                samples: scores.len(),
            })
        }
        Target::Clean(_) => {
            let mut scores = Vec::new();
            let mut base = Vec::new();
            for (s, p) in samples.iter().zip(&preds) {
                let Target::Clean(clean) = &s.target else {
                    return Err(Error::invalid("evaluate", "mixed target kinds"));
                };
                let ext = s.extents();
                scores.push(ssim(&p.to_f64_vec(), clean.data(), ext)?);
                base.push(ssim(s.input.data(), clean.data(), ext)?);
            }
            Ok(EvalReport {
                metric: "ssim",
                value: mean(&scores),
                ci: bootstrap_ci(&scores, mean, BOOTSTRAP_RESAMPLES, CONFIDENCE, seed)?,
                baseline: Some(mean(&base)),
                samples: scores.len(),
            })
        }
        Target::Label(_) => {
            let pairs = samples
                .iter()
                .zip(&preds)
                .map(|(s, p)| match s.target {
                    // positive-class margin ranks identically to its softmax
                    Target::Label(l) if p.numel() == 2 => Ok((p.data()[1].f64() - p.data()[0].f64(), l == 1)),
                    _ => Err(Error::invalid("evaluate", "expected binary logits and label targets")),
                })
                .collect::<Result<Vec<(f64, bool)>>>()?;
            let score = |set: &[(f64, bool)]| {
                let (s, l): (Vec<f64>, Vec<bool>) = set.iter().copied().unzip();
                // single-class resamples carry no ranking information
                auroc(&s, &l).unwrap_or(0.5)
            };
            let (s, l): (Vec<f64>, Vec<bool>) = pairs.iter().copied().unzip();
            Ok(EvalReport {
                metric: "auroc",
                value: auroc(&s, &l)?,
                ci: bootstrap_ci(&pairs, score, BOOTSTRAP_RESAMPLES, CONFIDENCE, seed)?,
                baseline: None,
                samples: pairs.len(),
            })
        }
    }
}
