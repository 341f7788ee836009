//! Runtime and memory benchmarks of backbones as context length grows.

mod fit;
mod measure;
mod plot;
mod sweep;

pub use fit::{fit_loglog_slope, speedup, LogLogFit};
pub use measure::{
    fwd_bwd, measure, peak_memory, time_fwd_bwd, BenchOptions, BenchRecord, BenchStatus, BenchTarget, Measurement,
    SequenceStack, DEFAULT_BUDGET_BYTES,
};
pub use plot::{loglog_svg, Series};
pub use sweep::{bench_config, run_sweep, shift_ablation, write_csv, write_plots, ShiftAblationRow, SweepSpec, CSV_HEADER};
