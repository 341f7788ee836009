//! The `mixerbench` command line: benchmarks, context-length sweeps,
//! synthetic-task training and evaluation, and the oracle self-test.

pub mod checks;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mixerbench_core::backbones::{BackboneKind, ImageSpec, Model, ModelConfig};
use mixerbench_core::bench::{bench_config, run_sweep, shift_ablation, write_csv, BenchOptions, BenchRecord, BenchStatus, SweepSpec};
use mixerbench_core::mixers::MixerKind;
use mixerbench_core::tasks::{Dataset, TaskKind, TaskSpec};
use mixerbench_core::trainer::{evaluate, train, write_curve, Checkpoint, TrainConfig};
use mixerbench_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use manifest::RunManifest;

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

/// Environment variable holding the GEMM thread count.
pub const THREADS_ENV: &str = "MIXERBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mixerbench", version, about = "Token-mixer context-length benchmarks on ViT and Swin backbones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time one configuration's forward and backward pass.
    Bench(BenchArgs),
    /// Train a model on a synthetic task.
    Train(TrainArgs),
    /// Score a checkpoint on the held-out split with bootstrap intervals.
    Eval(EvalArgs),
    /// Benchmark every mixer across the patch (ViT) or window (Swin) grid.
    SweepContext(SweepArgs),
    /// Run the oracle-equivalence and gradient checks.
    Selftest,
}

/// Model fields, named after the config-file keys. Flags override values
/// read from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// `key = value` model config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// vit or swin.
    #[arg(long)]
    pub backbone: Option<String>,
    /// attention, hyena or mamba_vision.
    #[arg(long)]
    pub mixer: Option<String>,
    #[arg(long, alias = "rank")]
    pub spatial_rank: Option<String>,
    #[arg(long, alias = "patch")]
    pub patch_size: Option<String>,
    #[arg(long, alias = "window")]
    pub window_size: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<String>,
    /// Block count (vit) or four comma-separated stage depths (swin).
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub num_heads: Option<String>,
    #[arg(long)]
    pub shift_enabled: Option<String>,
    /// learned or none.
    #[arg(long)]
    pub pos_embed: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchFlags {
    /// Image side length, the same along every spatial axis.
    #[arg(long, default_value_t = 256)]
    pub extent: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    /// Simulated memory budget in GiB; 0 disables it.
    #[arg(long, default_value_t = 4.0)]
    pub budget_gb: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BenchFlags {
    fn options(&self) -> BenchOptions {
        BenchOptions {
            warmup: self.warmup,
            trials: self.trials,
            budget_bytes: (self.budget_gb > 0.0).then_some((self.budget_gb * (1u64 << 30) as f64) as usize),
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bench: BenchFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub bench: BenchFlags,
    /// Time attention Swin with window shifting on and off instead of the
    /// full mixer grid.
    #[arg(long)]
    pub shift_ablation: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// segmentation, denoising or classification.
    #[arg(long, default_value = "denoising")]
    pub task: String,
    /// Image side length; 64 in 2D and 32 in 3D when omitted.
    #[arg(long)]
    pub extent: Option<usize>,
    /// Total samples, split 60/20/20.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Seeds the data, the initialization and batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DataArgs {
    fn dataset(&self, rank: usize) -> Result<(TaskSpec, Dataset)> {
        let kind: TaskKind = self.task.parse()?;
        let extents = match self.extent {
            Some(e) => vec![e; rank],
            None => TaskSpec::default_extents(rank),
        };
        let spec = TaskSpec::new(kind, extents);
        let data = Dataset::generate(&spec, self.samples, self.seed)?;
        Ok((spec, data))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub max_lr: f64,
    #[arg(long, default_value_t = 0.3)]
    pub pct_warmup: f64,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    /// Disable affine and brightness augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Must match the training run so the same test split is rebuilt.
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write eval.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `key = value` pairs of a config file, `#` comments stripped.
pub fn config_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", lineno + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ModelArgs {
    /// Config-file entries followed by flag entries, so later ones win.
    pub fn entries(&self) -> Result<Vec<(String, String)>> {
        let mut out = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
                config_entries(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("backbone", &self.backbone),
            ("mixer", &self.mixer),
            ("spatial_rank", &self.spatial_rank),
            ("patch_size", &self.patch_size),
            ("window_size", &self.window_size),
            ("embed_dim", &self.embed_dim),
            ("depth", &self.depth),
            ("num_heads", &self.num_heads),
            ("shift_enabled", &self.shift_enabled),
            ("pos_embed", &self.pos_embed),
        ];
        out.extend(flags.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))));
        Ok(out)
    }

    /// Starts from the backbone's defaults for the chosen mixer and rank,
    /// then applies every entry in order.
    pub fn resolve(&self) -> Result<ModelConfig> {
        let entries = self.entries()?;
        let (backbone, mixer, rank) = leading_keys(&entries)?;
        let mut cfg = match backbone {
            BackboneKind::Vit => ModelConfig::vit(mixer, rank, 16),
            BackboneKind::Swin => ModelConfig::swin(mixer, rank, 4, 8),
        };
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn last<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Backbone, mixer and rank, which pick the defaults everything else
/// starts from.
fn leading_keys(entries: &[(String, String)]) -> Result<(BackboneKind, MixerKind, usize)> {
    let backbone = last(entries, "backbone").unwrap_or("vit").parse()?;
    let mixer = last(entries, "mixer").unwrap_or("attention").parse()?;
    let rank = last(entries, "spatial_rank").unwrap_or("2");
    let rank = rank.parse().map_err(|_| format!("spatial_rank: expected an integer, got {rank:?}"))?;
    Ok((backbone, mixer, rank))
}

/// Parses `argv` (program name first), runs the command and maps the
/// outcome to an exit code: usage errors 2, runtime errors 1.
pub fn run(argv: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command, &argv)) {
        Ok(code) => code,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// Pins the GEMM thread pool from `MIXERBENCH_THREADS` (default 1). Must
/// run before the first matrix product.
pub fn configure_threads() -> Result<()> {
    let threads = std::env::var(THREADS_ENV).unwrap_or_else(|_| "1".to_string());
    match threads.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            std::env::set_var("MATMUL_NUM_THREADS", n.to_string());
            Ok(())
        }
        _ => Err(format!("{THREADS_ENV} must be a positive integer, got {threads:?}").into()),
    }
}

fn dispatch(command: Command, argv: &[String]) -> Result<ExitCode> {
    match command {
        Command::Bench(a) => cmd_bench(&a, argv),
        Command::Train(a) => cmd_train(&a, argv),
        Command::Eval(a) => cmd_eval(&a, argv),
        Command::SweepContext(a) => cmd_sweep(&a, argv),
        Command::Selftest => cmd_selftest(),
    }
}

fn record_line(r: &BenchRecord) -> String {
    let head = format!(
        "{} {} rank {} patch {} window {} tokens {}",
        r.config.backbone, r.config.mixer, r.config.spatial_rank, r.config.patch_size, r.config.window_size, r.context_length
    );
    match &r.status {
        BenchStatus::Ok => format!(
            "{head}: {:.6} s, peak {} bytes, {} flops",
            r.mean_time_s, r.peak_bytes, r.flops
        ),
        BenchStatus::OutOfMemory => format!("{head}: X (over memory budget)"),
        BenchStatus::Failed(e) => format!("{head}: error ({e})"),
    }
}

fn cmd_bench(a: &BenchArgs, argv: &[String]) -> Result<ExitCode> {
    let cfg = a.model.resolve()?;
    let image = ImageSpec::new(a.bench.channels, &vec![a.bench.extent; cfg.spatial_rank]);
    let input = Tensor::<f32>::randn(image.shape(), 1.0, &mut ChaCha8Rng::seed_from_u64(a.bench.seed))?;
    let record = bench_config(&cfg, &image, &input, &a.bench.options(), a.bench.seed)?;
    write_csv(&a.out.join("bench.csv"), std::slice::from_ref(&record))?;
    RunManifest::new(argv.to_vec(), cfg.hash(), a.bench.seed, vec!["bench.csv".into()]).write(&a.out)?;
    println!("{}", record_line(&record));
    if let BenchStatus::Failed(e) = &record.status {
        return Err(e.clone().into());
    }
    Ok(ExitCode::SUCCESS)
}

/// The sweep grid for the requested backbone and rank, with the remaining
/// entries applied: `mixer` and the swept size narrow the grid, the rest
/// edit the shared template.
pub fn sweep_spec(model: &ModelArgs, bench: &BenchFlags) -> Result<SweepSpec> {
    let entries = model.entries()?;
    let (backbone, _, rank) = leading_keys(&entries)?;
    let mut spec = match backbone {
        BackboneKind::Vit => SweepSpec::vit(rank, bench.extent),
        BackboneKind::Swin => SweepSpec::swin(rank, bench.extent),
    };
    let swept = match backbone {
        BackboneKind::Vit => "patch_size",
        BackboneKind::Swin => "window_size",
    };
    for (k, v) in &entries {
        match k.as_str() {
            "backbone" | "spatial_rank" => {}
            "mixer" => spec.mixers = vec![v.parse()?],
            key if key == swept => {
                let size = v.parse().map_err(|_| format!("{key}: expected an integer, got {v:?}"))?;
                spec.sizes = vec![size];
            }
            key => spec.template.set(key, v)?,
        }
    }
    spec.channels = bench.channels;
    spec.options = bench.options();
    spec.seed = bench.seed;
    Ok(spec)
}

fn cmd_sweep(a: &SweepArgs, argv: &[String]) -> Result<ExitCode> {
    let spec = sweep_spec(&a.model, &a.bench)?;
    let hash = spec.template.hash();
    if a.shift_ablation {
        let rows = shift_ablation(&spec, Some(&a.out))?;
        for row in &rows {
            println!("{}", record_line(&row.shifted));
            println!("{}", record_line(&row.unshifted));
            println!("window {}: max abs output difference {:.3e}", row.window, row.max_abs_diff);
        }
        RunManifest::new(argv.to_vec(), hash, spec.seed, vec!["shift_ablation.csv".into()]).write(&a.out)?;
        return Ok(ExitCode::SUCCESS);
    }
    let records = run_sweep(&spec, Some(&a.out))?;
    for r in &records {
        println!("{}", record_line(r));
    }
    let mut artifacts = vec!["bench.csv".to_string()];
    artifacts.extend(list_svgs(&a.out)?);
    RunManifest::new(argv.to_vec(), hash, spec.seed, artifacts).write(&a.out)?;
    Ok(ExitCode::SUCCESS)
}

fn list_svgs(dir: &Path) -> Result<Vec<String>> {
    let mut out: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".svg"))
        .collect();
    out.sort();
    Ok(out)
}

pub const CHECKPOINT_FILE: &str = "checkpoint.mxck";
pub const CURVE_FILE: &str = "curve.csv";
pub const MODEL_CONFIG_FILE: &str = "model.cfg";

fn cmd_train(a: &TrainArgs, argv: &[String]) -> Result<ExitCode> {
    let cfg = a.model.resolve()?;
    let (spec, data) = a.data.dataset(cfg.spatial_rank)?;
    let (model, mut params) = Model::build::<f32>(&cfg, &spec.image(), spec.head(), a.data.seed)?;
    let mut tc = TrainConfig::for_task(spec.kind);
    tc.max_lr = a.max_lr;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.pct_warmup = a.pct_warmup;
    tc.eval_every = a.eval_every;
    tc.max_steps = a.max_steps;
    tc.seed = a.data.seed;
    if a.no_augment {
        tc.augment = None;
    }
    let report = train(&model, &mut params, &data, &tc)?;
    std::fs::create_dir_all(&a.out)?;
    report.best.save(&a.out.join(CHECKPOINT_FILE))?;
    write_curve(&a.out.join(CURVE_FILE), &report.curve)?;
    std::fs::write(a.out.join(MODEL_CONFIG_FILE), cfg.to_text())?;
    RunManifest::new(
        argv.to_vec(),
        cfg.hash(),
        a.data.seed,
        vec![CHECKPOINT_FILE.into(), CURVE_FILE.into(), MODEL_CONFIG_FILE.into()],
    )
    .write(&a.out)?;
    println!(
        "trained {} steps on {} ({} train / {} val samples); best val loss {:.6} at step {}",
        report.steps,
        spec.kind,
        data.train.len(),
        data.val.len(),
        report.best.val_loss,
        report.best.step
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: &EvalArgs, argv: &[String]) -> Result<ExitCode> {
    let cfg = a.model.resolve()?;
    let ckpt = Checkpoint::<f32>::load(&a.checkpoint)?;
    if ckpt.config_hash != cfg.hash() {
        return Err(format!(
            "checkpoint config hash {} does not match the model config ({})",
            ckpt.config_hash,
            cfg.hash()
        )
        .into());
    }
    let (spec, data) = a.data.dataset(cfg.spatial_rank)?;
    let (model, mut params) = Model::build::<f32>(&cfg, &spec.image(), spec.head(), a.data.seed)?;
    ckpt.load_into(&mut params)?;
    let report = evaluate(&model, &params, &data.test, a.data.seed)?;
    let mut line = format!(
        "{} {:.4} (95% CI {:.4}..{:.4}) over {} test samples",
        report.metric, report.value, report.ci.0, report.ci.1, report.samples
    );
    if let Some(b) = report.baseline {
        line.push_str(&format!("; noisy input {b:.4}"));
    }
    println!("{line}");
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        let json = serde_json::json!({
            "metric": report.metric,
            "value": report.value,
            "ci": [report.ci.0, report.ci.1],
            "baseline": report.baseline,
            "samples": report.samples,
            "checkpoint_step": ckpt.step,
        });
        std::fs::write(out.join("eval.json"), serde_json::to_string_pretty(&json)? + "\n")?;
        RunManifest::new(argv.to_vec(), cfg.hash(), a.data.seed, vec!["eval.json".into()]).write(out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> Result<ExitCode> {
    let results = checks::all();
    for c in &results {
        println!("{} {:<22} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = results.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", results.len());
    Ok(if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
