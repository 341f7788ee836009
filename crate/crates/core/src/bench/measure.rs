//! Forward+backward timing and peak-memory instrumentation.

use std::time::Instant;

use mixerbench_tensor::alloc::{alloc_stats, reset_peak, BudgetGuard};
use mixerbench_tensor::instrument::{flops, reset_flops, with_finite_checks};
use mixerbench_tensor::{Element, Tape, Tensor, Var};

use crate::backbones::{Block, Model, ModelConfig};
use crate::mixers::MixerKind;
use crate::params::{Bound, Builder, Params};
use crate::Result;

/// Default simulated device memory.
pub const DEFAULT_BUDGET_BYTES: usize = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub trials: usize,
    /// Live tensor bytes above which a pass fails as out of memory.
    pub budget_bytes: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            warmup: 3,
            trials: 10,
            budget_bytes: Some(DEFAULT_BUDGET_BYTES),
        }
    }
}

/// A network reduced to the scalar whose backward pass is timed.
pub trait BenchTarget<T: Element> {
    fn bench_loss(&self, p: &Bound<T>, input: &Var<T>) -> Result<Var<T>>;
}

impl<T: Element> BenchTarget<T> for Model {
    /// Backbone only: task heads are excluded from timing.
    fn bench_loss(&self, p: &Bound<T>, input: &Var<T>) -> Result<Var<T>> {
        self.backbone_loss(p, input)
    }
}

/// A plain stack of mixer blocks over a `[1, n, d]` token sequence, for
/// measuring scaling in `n` without patching effects.
#[derive(Debug, Clone)]
pub struct SequenceStack {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

impl SequenceStack {
    pub fn build<T: Element>(kind: MixerKind, dim: usize, depth: usize, heads: usize, seed: u64) -> Result<(Self, Params<T>)> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut b = Builder::new(&mut params, &mut rng);
        let blocks = (0..depth)
            .map(|i| Block::new(&mut b.scope(&format!("blocks.{i}")), kind, dim, heads))
            .collect::<Result<Vec<_>>>()?;
        Ok((SequenceStack { blocks, dim }, params))
    }
}

impl<T: Element> BenchTarget<T> for SequenceStack {
    fn bench_loss(&self, p: &Bound<T>, input: &Var<T>) -> Result<Var<T>> {
        let mut x = input.clone();
        for b in &self.blocks {
            x = b.forward_seq(p, &x, None)?;
        }
        Ok(x.sum()?)
    }
}

/// One untimed forward+backward pass.
pub fn fwd_bwd<T: Element, B: BenchTarget<T> + ?Sized>(target: &B, params: &Params<T>, input: &Tensor<T>) -> Result<()> {
    let tape = Tape::new();
    let bound = params.bind(Some(&tape));
    let loss = target.bench_loss(&bound, &Var::constant(input.clone()))?;
    tape.backward(&loss)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub trial_times_s: Vec<f64>,
    pub mean_time_s: f64,
    /// High-water mark of tensor bytes allocated by one pass.
    pub peak_bytes: u64,
    pub flops: u64,
}

/// Peak live tensor bytes of one forward+backward pass, above what was
/// live before it (parameters and input).
pub fn peak_memory<T: Element, B: BenchTarget<T> + ?Sized>(target: &B, params: &Params<T>, input: &Tensor<T>) -> Result<u64> {
    let base = alloc_stats().current_bytes;
    reset_peak();
    fwd_bwd(target, params, input)?;
    Ok((alloc_stats().peak_bytes - base) as u64)
}

/// Times `trials` passes after `warmup` discarded ones. The first warmup
/// pass (always run) also records FLOPs and peak memory.
pub fn measure<T: Element, B: BenchTarget<T> + ?Sized>(
    target: &B,
    params: &Params<T>,
    input: &Tensor<T>,
    opts: &BenchOptions,
) -> Result<Measurement> {
    let _budget = BudgetGuard::new(opts.budget_bytes);
    with_finite_checks(false, || {
        reset_flops();
        let peak_bytes = peak_memory(target, params, input)?;
        let flops = flops();
        for _ in 1..opts.warmup {
            fwd_bwd(target, params, input)?;
        }
        let mut trial_times_s = Vec::with_capacity(opts.trials);
        for _ in 0..opts.trials {
            let start = Instant::now();
            fwd_bwd(target, params, input)?;
            trial_times_s.push(start.elapsed().as_secs_f64());
        }
        let mean_time_s = trial_times_s.iter().sum::<f64>() / trial_times_s.len().max(1) as f64;
        Ok(Measurement {
            trial_times_s,
            mean_time_s,
            peak_bytes,
            flops,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenchStatus {
    Ok,
    /// Exceeded the memory budget; written as `X`.
    OutOfMemory,
    Failed(String),
}

impl BenchStatus {
    pub fn label(&self) -> &'static str {
        match self {
            BenchStatus::Ok => "ok",
            BenchStatus::OutOfMemory => "X",
            BenchStatus::Failed(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub config: ModelConfig,
    pub extents: Vec<usize>,
    /// Tokens mixed jointly: all tokens (ViT) or one window (Swin).
    pub context_length: usize,
    pub trial_times_s: Vec<f64>,
    /// NaN unless the status is `Ok`.
    pub mean_time_s: f64,
    pub peak_bytes: u64,
    pub flops: u64,
    pub status: BenchStatus,
}

impl BenchRecord {
    pub fn failed(config: &ModelConfig, extents: &[usize], status: BenchStatus) -> Self {
        BenchRecord {
            config: config.clone(),
            extents: extents.to_vec(),
            context_length: crate::backbones::context_length(config, extents),
            trial_times_s: Vec::new(),
            mean_time_s: f64::NAN,
            peak_bytes: 0,
            flops: 0,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == BenchStatus::Ok
    }
}

/// Times a built model's backbone on `input`; exceeding the memory
/// budget yields an `X` record instead of an error.
pub fn time_fwd_bwd<T: Element>(
    model: &Model,
    params: &Params<T>,
    input: &Tensor<T>,
    opts: &BenchOptions,
) -> Result<BenchRecord> {
    let extents = model.image.extents.clone();
    match measure(model, params, input, opts) {
        Ok(m) => Ok(BenchRecord {
            config: model.config.clone(),
            context_length: model.context_length(),
            extents,
            trial_times_s: m.trial_times_s,
            mean_time_s: m.mean_time_s,
            peak_bytes: m.peak_bytes,
            flops: m.flops,
            status: BenchStatus::Ok,
        }),
        Err(e) if e.is_out_of_memory() => Ok(BenchRecord::failed(&model.config, &extents, BenchStatus::OutOfMemory)),
        Err(e) => Err(e),
    }
}
