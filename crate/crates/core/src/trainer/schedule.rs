use std::f64::consts::PI;

use crate::{Error, Result};

/// Initial learning rate is `max_lr / ONE_CYCLE_START_DIV`.
pub const ONE_CYCLE_START_DIV: f64 = 25.0;
/// Final learning rate is `max_lr / ONE_CYCLE_END_DIV`.
pub const ONE_CYCLE_END_DIV: f64 = 1e4;

/// One-cycle schedule: cosine ramp up to `max_lr` at
/// `pct_warmup * total_steps`, then cosine annealing to the floor.
pub fn one_cycle_lr(step: usize, total_steps: usize, max_lr: f64, pct_warmup: f64) -> Result<f64> {
    if step > total_steps || total_steps == 0 {
        return Err(Error::invalid(
            "one_cycle_lr",
            format!("step {step} outside 0..={total_steps}"),
        ));
    }
    if !(max_lr > 0.0 && pct_warmup > 0.0 && pct_warmup < 1.0) {
        return Err(Error::invalid("one_cycle_lr", format!("max_lr {max_lr}, pct_warmup {pct_warmup}")));
    }
    let start = max_lr / ONE_CYCLE_START_DIV;
    let end = max_lr / ONE_CYCLE_END_DIV;
    let peak = pct_warmup * total_steps as f64;
    let s = step as f64;
    Ok(if s <= peak {
        let f = s / peak;
        start + (max_lr - start) * (1.0 - (PI * f).cos()) / 2.0
    } else {
        let f = (s - peak) / (total_steps as f64 - peak);
        end + (max_lr - end) * (1.0 + (PI * f).cos()) / 2.0
    })
}
