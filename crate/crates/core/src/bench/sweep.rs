//! Context-length sweeps over patch size (ViT) or window size (Swin).

use std::path::{Path, PathBuf};

use mixerbench_tensor::alloc::BudgetGuard;
use mixerbench_tensor::{Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fit::fit_loglog_slope;
use super::measure::{time_fwd_bwd, BenchOptions, BenchRecord, BenchStatus};
use super::plot::{loglog_svg, Series};
use crate::backbones::{BackboneKind, HeadSpec, ImageSpec, Model, ModelConfig, SWIN_PATCHES, SWIN_STAGES, SWIN_WINDOWS, VIT_PATCHES};
use crate::mixers::MixerKind;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "backbone",
    "mixer",
    "rank",
    "patch",
    "window",
    "tokens",
    "mean_time_s",
    "peak_bytes",
    "flops",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub backbone: BackboneKind,
    pub mixers: Vec<MixerKind>,
    pub extents: Vec<usize>,
    pub channels: usize,
    /// Patch sizes (ViT) or window sizes (Swin) to visit.
    pub sizes: Vec<usize>,
    /// Everything but mixer and the swept size comes from here.
    pub template: ModelConfig,
    pub options: BenchOptions,
    pub seed: u64,
}

impl SweepSpec {
    /// All mixers over patches 32, 16, 8 and 4.
    pub fn vit(rank: usize, extent: usize) -> Self {
        SweepSpec {
            backbone: BackboneKind::Vit,
            mixers: MixerKind::ALL.to_vec(),
            extents: vec![extent; rank],
            channels: 1,
            sizes: VIT_PATCHES.iter().rev().copied().collect(),
            template: ModelConfig::vit(MixerKind::Attention, rank, 16),
            options: BenchOptions::default(),
            seed: 0,
        }
    }

    /// All mixers over windows 4, 8 and 16, with the largest patch that
    /// leaves the last stage at least one full window.
    pub fn swin(rank: usize, extent: usize) -> Self {
        let largest = *SWIN_WINDOWS.iter().max().expect("nonempty");
        let last_stage = 1 << (SWIN_STAGES - 1);
        let patch = SWIN_PATCHES
            .iter()
            .rev()
            .copied()
            .find(|&p| extent / p / last_stage >= largest)
            .unwrap_or(SWIN_PATCHES[0]);
        SweepSpec {
            backbone: BackboneKind::Swin,
            mixers: MixerKind::ALL.to_vec(),
            extents: vec![extent; rank],
            channels: 1,
            sizes: SWIN_WINDOWS.to_vec(),
            template: ModelConfig::swin(MixerKind::Attention, rank, patch, 4),
            options: BenchOptions::default(),
            seed: 0,
        }
    }

    /// The model config of one cell. Swin keeps the template's shift
    /// setting for attention and disables it for the alternatives.
    pub fn cell(&self, mixer: MixerKind, size: usize) -> ModelConfig {
        let mut cfg = self.template.clone();
        cfg.backbone = self.backbone;
        cfg.mixer = mixer;
        cfg.spatial_rank = self.extents.len();
        match self.backbone {
            BackboneKind::Vit => cfg.patch_size = size,
            BackboneKind::Swin => {
                cfg.window_size = size;
                cfg.shift_enabled = cfg.shift_enabled && mixer == MixerKind::Attention;
            }
        }
        cfg
    }

    pub fn cells(&self) -> Vec<ModelConfig> {
        self.mixers
            .iter()
            .flat_map(|&m| self.sizes.iter().map(move |&s| (m, s)))
            .map(|(m, s)| self.cell(m, s))
            .collect()
    }

    pub fn input(&self) -> Result<Tensor<f32>> {
        let mut shape = vec![self.channels];
        shape.extend(&self.extents);
        Ok(Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(self.seed))?)
    }
}

/// Builds and times one configuration. Build failures become records.
pub fn bench_config(cfg: &ModelConfig, image: &ImageSpec, input: &Tensor<f32>, opts: &BenchOptions, seed: u64) -> Result<BenchRecord> {
    let built = {
        let _budget = BudgetGuard::new(opts.budget_bytes);
        Model::build::<f32>(cfg, image, HeadSpec::Classify { classes: 2 }, seed)
    };
    match built {
        Ok((model, params)) => match time_fwd_bwd(&model, &params, input, opts) {
            Ok(r) => Ok(r),
            Err(e) => Ok(BenchRecord::failed(cfg, &image.extents, BenchStatus::Failed(e.to_string()))),
        },
        Err(e) if e.is_out_of_memory() => Ok(BenchRecord::failed(cfg, &image.extents, BenchStatus::OutOfMemory)),
        Err(e) => Ok(BenchRecord::failed(cfg, &image.extents, BenchStatus::Failed(e.to_string()))),
    }
}

/// Runs every cell one at a time. With `out_dir`, writes `bench.csv` and
/// the time and memory plots there.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<Vec<BenchRecord>> {
    let input = spec.input()?;
    let image = ImageSpec::new(spec.channels, &spec.extents);
    let mut records = Vec::new();
    for cfg in spec.cells() {
        records.push(bench_config(&cfg, &image, &input, &spec.options, spec.seed)?);
        if let Some(dir) = out_dir {
            // keep partial results on disk as the sweep progresses
            write_csv(&dir.join("bench.csv"), &records)?;
        }
    }
    if let Some(dir) = out_dir {
        write_csv(&dir.join("bench.csv"), &records)?;
        write_plots(dir, &records)?;
    }
    Ok(records)
}

fn opt<T: ToString>(ok: bool, v: T) -> String {
    if ok {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn write_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        let c = &r.config;
        let ok = r.is_ok();
        w.write_record([
            c.backbone.to_string(),
            c.mixer.to_string(),
            c.spatial_rank.to_string(),
            c.patch_size.to_string(),
            c.window_size.to_string(),
            r.context_length.to_string(),
            opt(ok, r.mean_time_s),
            opt(ok, r.peak_bytes),
            opt(ok, r.flops),
            r.status.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One time and one memory chart per backbone and mixer, named
/// `{backbone}_{mixer}_time.svg` and `{backbone}_{mixer}_mem.svg`.
pub fn write_plots(dir: &Path, records: &[BenchRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut families: Vec<(BackboneKind, MixerKind)> = Vec::new();
    for r in records {
        let key = (r.config.backbone, r.config.mixer);
        if !families.contains(&key) {
            families.push(key);
        }
    }
    let mut written = Vec::new();
    for (backbone, mixer) in families {
        let rows: Vec<&BenchRecord> = records
            .iter()
            .filter(|r| r.is_ok() && r.config.backbone == backbone && r.config.mixer == mixer)
            .collect();
        let mut groups: Vec<(bool, Vec<&BenchRecord>)> = Vec::new();
        for r in rows {
            match groups.iter_mut().find(|(s, _)| *s == r.config.shift_enabled) {
                Some((_, g)) => g.push(r),
                None => groups.push((r.config.shift_enabled, vec![r])),
            }
        }
        let series = |f: &dyn Fn(&BenchRecord) -> f64| -> Vec<Series> {
            groups
                .iter()
                .map(|(shift, g)| {
                    let points: Vec<(f64, f64)> = g.iter().map(|r| (r.context_length as f64, f(r))).collect();
                    let slope = fit_loglog_slope(&points).map(|fit| format!(", slope {:.2}", fit.slope)).unwrap_or_default();
                    let shift = if backbone == BackboneKind::Swin { format!(" shift={shift}") } else { String::new() };
                    Series {
                        label: format!("{mixer}{shift}{slope}"),
                        points,
                    }
                })
                .collect()
        };
        for (suffix, y_label, f) in [
            ("time", "mean forward+backward time (s)", &(|r: &BenchRecord| r.mean_time_s) as &dyn Fn(&BenchRecord) -> f64),
            ("mem", "peak tensor bytes", &|r: &BenchRecord| r.peak_bytes as f64),
        ] {
            let path = dir.join(format!("{backbone}_{mixer}_{suffix}.svg"));
            let title = format!("{backbone} {mixer}: {suffix} vs context length");
            std::fs::write(&path, loglog_svg(&title, "tokens per mixer call", y_label, &series(f)))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftAblationRow {
    pub window: usize,
    pub shifted: BenchRecord,
    pub unshifted: BenchRecord,
    /// Largest difference between the two models' backbone outputs on the
    /// same input and weights.
    pub max_abs_diff: f64,
}

/// Attention Swin with shifting on and off at every window of `spec`.
/// Shifting adds no parameters, so both variants share weights.
pub fn shift_ablation(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<Vec<ShiftAblationRow>> {
    if spec.backbone != BackboneKind::Swin {
        return Err(Error::config("the shift ablation needs the swin backbone"));
    }
    let input = spec.input()?;
    let image = ImageSpec::new(spec.channels, &spec.extents);
    let mut rows = Vec::new();
    for &window in &spec.sizes {
        let mut base = spec.cell(MixerKind::Attention, window);
        base.shift_enabled = true;
        let off = ModelConfig {
            shift_enabled: false,
            ..base.clone()
        };
        let shifted = bench_config(&base, &image, &input, &spec.options, spec.seed)?;
        let unshifted = bench_config(&off, &image, &input, &spec.options, spec.seed)?;
        let max_abs_diff = if shifted.is_ok() && unshifted.is_ok() {
            let outputs = |cfg: &ModelConfig| -> Result<Vec<f32>> {
                let (model, params) = Model::build::<f32>(cfg, &image, HeadSpec::Classify { classes: 2 }, spec.seed)?;
                let levels = model.features(&params.bind(None), &Var::constant(input.clone()))?;
                Ok(model.outputs(&levels).iter().flat_map(|v| v.value().to_vec()).collect())
            };
            let (a, b) = (outputs(&base)?, outputs(&off)?);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
        } else {
            f64::NAN
        };
        rows.push(ShiftAblationRow {
            window,
            shifted,
            unshifted,
            max_abs_diff,
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("shift_ablation.csv"))?;
        w.write_record(["window", "shift_enabled", "tokens", "mean_time_s", "peak_bytes", "status", "max_abs_diff"])?;
        for row in &rows {
            for r in [&row.shifted, &row.unshifted] {
                w.write_record([
                    row.window.to_string(),
                    r.config.shift_enabled.to_string(),
                    r.context_length.to_string(),
                    opt(r.is_ok(), r.mean_time_s),
                    opt(r.is_ok(), r.peak_bytes),
                    r.status.label().to_string(),
                    opt(row.max_abs_diff.is_finite(), row.max_abs_diff),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(rows)
}
