//! Central finite-difference checks of analytic gradients.

use crate::{Result, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Largest per-element relative error over all inputs.
    pub max_rel_error: f64,
    /// Largest absolute difference, for elements where both values are
    /// below the noise floor.
    pub max_abs_error: f64,
    /// Gradient magnitude below which central differences cannot resolve
    /// four significant digits: `max(1e-7, 1e4 * eps * max(|f|, 1) / step)`.
    pub noise_floor: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error < rel_tol && self.max_abs_error < rel_tol
    }
}

/// Elements with both gradients below this magnitude are always compared
/// absolutely instead of relatively.
const TINY: f64 = 1e-7;

/// Compares the tape gradient of scalar `f` at `inputs` against central
/// differences with the given step.
pub fn check(
    inputs: &[Tensor<f64>],
    step: f64,
    f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>,
) -> Result<GradCheck> {
    let tape = Tape::new();
    let leaves: Vec<Var<f64>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&leaves)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<Tensor<f64>> = leaves.iter().map(|l| grads.wrt(l)).collect::<Result<_>>()?;

    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let vars: Vec<Var<f64>> = xs.iter().cloned().map(Var::constant).collect();
        f(&vars)?.value().item()
    };

    // rounding in f(x +- step) is amplified by 1/step in the difference
    let f0 = loss.value().item()?.abs();
    let noise_floor = TINY.max(1e4 * f64::EPSILON * f0.max(1.0) / step);
    let mut out = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        noise_floor,
        checked: 0,
    };
    let mut current: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let base = input.to_vec();
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += step;
            current[i] = Tensor::from_vec(input.shape().to_vec(), plus)?;
            let fp = eval(&current)?;
            let mut minus = base.clone();
            minus[j] -= step;
            current[i] = Tensor::from_vec(input.shape().to_vec(), minus)?;
            let fm = eval(&current)?;
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic[i].data()[j];
            let scale = a.abs().max(numeric.abs());
            if scale < noise_floor {
                out.max_abs_error = out.max_abs_error.max((a - numeric).abs());
            } else {
                out.max_rel_error = out.max_rel_error.max((a - numeric).abs() / scale);
            }
            out.checked += 1;
        }
        current[i] = input.clone();
    }
    Ok(out)
}
