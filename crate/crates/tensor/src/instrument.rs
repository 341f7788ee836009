//! Thread-local switches and counters used by the benchmark harness.

use std::cell::Cell;

thread_local! {
    static FLOPS: Cell<u64> = const { Cell::new(0) };
    static FINITE_CHECKS: Cell<bool> = const { Cell::new(cfg!(debug_assertions)) };
}

/// Adds to the forward FLOP counter of the current thread.
///
/// Only multiply-accumulate work is counted: dense products (two FLOPs per
/// MAC), convolution taps, FFT butterflies, recurrence updates and
/// element-wise products of two tensors. Scalar scaling, bias additions,
/// activations, normalizations and softmax are not counted.
pub fn add_flops(n: u64) {
    FLOPS.with(|f| f.set(f.get() + n));
}

pub fn flops() -> u64 {
    FLOPS.with(|f| f.get())
}

pub fn reset_flops() {
    FLOPS.with(|f| f.set(0));
}

/// Whether primitives reject non-finite outputs. Defaults to on in debug
/// builds and off in release builds.
pub fn finite_checks() -> bool {
    FINITE_CHECKS.with(|f| f.get())
}

pub fn set_finite_checks(on: bool) {
    FINITE_CHECKS.with(|f| f.set(on));
}

/// Runs `f` with non-finite checks switched to `on`, restoring the previous
/// setting afterwards.
pub fn with_finite_checks<R>(on: bool, f: impl FnOnce() -> R) -> R {
    let prev = finite_checks();
    set_finite_checks(on);
    let out = f();
    set_finite_checks(prev);
    out
}
