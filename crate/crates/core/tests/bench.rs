use mixerbench_core::backbones::{BackboneKind, HeadSpec, ImageSpec, Model, ModelConfig, PosEmbed};
use mixerbench_core::bench::*;
use mixerbench_core::mixers::MixerKind;
use mixerbench_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick() -> BenchOptions {
    BenchOptions {
        warmup: 1,
        trials: 2,
        ..Default::default()
    }
}

fn image(ext: &[usize]) -> Tensor<f32> {
    let mut shape = vec![1];
    shape.extend(ext);
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

fn small_vit(mixer: MixerKind, patch: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        depth: vec![1],
        num_heads: 2,
        ..ModelConfig::vit(mixer, 2, patch)
    }
}

#[test]
fn loglog_fit_recovers_power_laws() {
    let quad: Vec<(f64, f64)> = [256.0, 512.0, 1024.0, 4096.0].iter().map(|&n: &f64| (n, 3e-9 * n * n)).collect();
    let fit = fit_loglog_slope(&quad).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-12);
    assert!(fit.residual < 1e-12);

    let nlogn: Vec<(f64, f64)> = (8..=13).map(|k| 2f64.powi(k)).map(|n| (n, n * n.ln())).collect();
    let s = fit_loglog_slope(&nlogn).unwrap().slope;
    assert!(s > 1.0 && s < 1.35, "{s}");

    let flat: Vec<(f64, f64)> = [1.0, 2.0, 3.0].iter().map(|&n| (n, 0.5)).collect();
    assert!(fit_loglog_slope(&flat).unwrap().slope.abs() < 1e-15);

    assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    assert!(fit_loglog_slope(&[(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)]).is_err());
    assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 2.0)]).is_err());
}

#[test]
fn speedup_examples() {
    assert_eq!(speedup(2.0, 2.0).unwrap(), 0.0);
    assert!((speedup(1.0, 0.2).unwrap() - 80.0).abs() < 1e-12);
    assert!(speedup(1.0, 1.5).unwrap() < 0.0);
    assert!(speedup(0.0, 1.0).is_err());
}

#[test]
fn record_holds_every_trial() {
    let cfg = small_vit(MixerKind::Hyena, 8);
    let img = ImageSpec::new(1, &[32, 32]);
    let (model, params) = Model::build::<f32>(&cfg, &img, HeadSpec::Classify { classes: 2 }, 0).unwrap();
    let opts = BenchOptions {
        warmup: 0,
        trials: 10,
        ..Default::default()
    };
    let r = time_fwd_bwd(&model, &params, &image(&[32, 32]), &opts).unwrap();
    assert_eq!(r.status, BenchStatus::Ok);
    assert_eq!(r.trial_times_s.len(), 10);
    assert_eq!(r.mean_time_s, r.trial_times_s.iter().sum::<f64>() / 10.0);
    assert_eq!(r.context_length, 16);
    assert!(r.flops > 0 && r.peak_bytes > 0);
}

#[test]
fn counts_are_reproducible() {
    let cfg = small_vit(MixerKind::MambaVision, 8);
    let img = ImageSpec::new(1, &[32, 32]);
    let x = image(&[32, 32]);
    let a = bench_config(&cfg, &img, &x, &quick(), 0).unwrap();
    let b = bench_config(&cfg, &img, &x, &quick(), 0).unwrap();
    assert_eq!((a.flops, a.peak_bytes), (b.flops, b.peak_bytes));
}

#[test]
fn attention_time_grows_with_tokens() {
    let opts = BenchOptions {
        warmup: 1,
        trials: 3,
        ..Default::default()
    };
    let times: Vec<f64> = [256, 1024, 4096]
        .iter()
        .map(|&n| {
            let (stack, params) = SequenceStack::build::<f32>(MixerKind::Attention, 16, 1, 2, 0).unwrap();
            let x = Tensor::<f32>::randn([1, n, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            measure(&stack, &params, &x, &opts).unwrap().mean_time_s
        })
        .collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]), "{times:?}");
}

#[test]
fn oversized_config_is_marked_out_of_memory() {
    let cfg = small_vit(MixerKind::Attention, 4);
    let img = ImageSpec::new(1, &[64, 64]);
    let opts = BenchOptions {
        budget_bytes: Some(200_000),
        ..quick()
    };
    let r = bench_config(&cfg, &img, &image(&[64, 64]), &opts, 0).unwrap();
    assert_eq!(r.status, BenchStatus::OutOfMemory);
    assert_eq!(r.status.label(), "X");
    assert!(r.mean_time_s.is_nan() && r.trial_times_s.is_empty());
}

#[test]
fn empty_vit_peak_is_embedding_activations() {
    for (ext, patch, d, pos) in [
        (64, 8, 16, PosEmbed::None),
        (64, 8, 32, PosEmbed::Learned),
        (128, 8, 16, PosEmbed::None),
        (64, 4, 16, PosEmbed::Learned),
        (64, 16, 8, PosEmbed::None),
    ] {
        let cfg = ModelConfig {
            embed_dim: d,
            depth: vec![0],
            pos_embed: pos,
            ..ModelConfig::vit(MixerKind::Attention, 2, patch)
        };
        let img = ImageSpec::new(1, &[ext, ext]);
        let (model, params) = Model::build::<f32>(&cfg, &img, HeadSpec::Classify { classes: 2 }, 0).unwrap();
        let peak = peak_memory(&model, &params, &image(&[ext, ext])).unwrap() as usize;
        let (n, p) = ((ext / patch) * (ext / patch), patch * patch);
        // the patch copy stays live throughout; the forward pass holds two
        // [n, d] activations at once, the backward pass the output
        // gradient plus weight, bias and loss gradients
        let forward = 2 * n * d;
        let backward = n * d + p * d + d + 1;
        let expected = 4 * (ext * ext + forward.max(backward));
        assert_eq!(peak, expected, "extent {ext}, patch {patch}, d {d}");
    }
}

#[test]
fn sequence_memory_scaling() {
    let peak = |kind, n| {
        let (stack, params) = SequenceStack::build::<f32>(kind, 16, 1, 2, 0).unwrap();
        let x = Tensor::<f32>::randn([1, n, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        peak_memory(&stack, &params, &x).unwrap() as f64
    };
    assert!(peak(MixerKind::Attention, 2048) / peak(MixerKind::Attention, 1024) > 3.0);
    for kind in [MixerKind::Hyena, MixerKind::MambaVision] {
        let ratio = peak(kind, 2048) / peak(kind, 1024);
        assert!(ratio < 2.5, "{kind}: {ratio}");
    }
}

#[test]
fn sweep_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SweepSpec::vit(2, 32);
    spec.mixers = vec![MixerKind::Attention];
    spec.sizes = vec![16, 8];
    spec.template = small_vit(MixerKind::Attention, 16);
    spec.options = quick();
    let records = run_sweep(&spec, Some(dir.path())).unwrap();
    assert_eq!(records.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "backbone,mixer,rank,patch,window,tokens,mean_time_s,peak_bytes,flops,status");
    assert!(lines[1].starts_with("vit,attention,2,16,") && lines[1].ends_with(",ok"));
    for suffix in ["time", "mem"] {
        let svg = std::fs::read_to_string(dir.path().join(format!("vit_attention_{suffix}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}

#[test]
fn failing_cells_do_not_abort_the_sweep() {
    let mut spec = SweepSpec::swin(2, 64);
    spec.mixers = vec![MixerKind::Hyena];
    spec.sizes = vec![4, 16];
    spec.template = ModelConfig {
        embed_dim: 8,
        depth: vec![1; 4],
        ..ModelConfig::swin(MixerKind::Attention, 2, 2, 4)
    };
    spec.options = quick();
    let records = run_sweep(&spec, None).unwrap();
    assert_eq!(records[0].status, BenchStatus::Ok);
    assert!(matches!(records[1].status, BenchStatus::Failed(_)));
    assert_eq!(records[1].status.label(), "error");
}

#[test]
fn sweep_grids_follow_the_defaults() {
    let vit = SweepSpec::vit(2, 256);
    let patches: Vec<usize> = vit.cells().iter().filter(|c| c.mixer == MixerKind::Attention).map(|c| c.patch_size).collect();
    assert_eq!(patches, vec![32, 16, 8, 4]);
    assert_eq!(vit.cells().len(), 12);
    let swin = SweepSpec::swin(2, 256);
    assert_eq!(swin.template.patch_size, 2);
    let cells = swin.cells();
    assert!(cells.iter().all(|c| c.backbone == BackboneKind::Swin));
    assert!(cells.iter().all(|c| c.shift_enabled == (c.mixer == MixerKind::Attention)));
    let windows: Vec<usize> = cells.iter().filter(|c| c.mixer == MixerKind::Hyena).map(|c| c.window_size).collect();
    assert_eq!(windows, vec![4, 8, 16]);
    assert_eq!(SweepSpec::swin(2, 512).template.patch_size, 4);
}

#[test]
fn shift_ablation_runs_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SweepSpec::swin(2, 64);
    spec.sizes = vec![4];
    spec.template = ModelConfig {
        embed_dim: 8,
        depth: vec![2, 2, 2, 2],
        ..ModelConfig::swin(MixerKind::Attention, 2, 2, 4)
    };
    spec.options = quick();
    let rows = shift_ablation(&spec, Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].shifted.is_ok() && rows[0].unshifted.is_ok(), "{:?}", rows[0]);
    assert!(rows[0].shifted.config.shift_enabled && !rows[0].unshifted.config.shift_enabled);
    assert!(rows[0].max_abs_diff > 1e-6);
    let text = std::fs::read_to_string(dir.path().join("shift_ablation.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(shift_ablation(&SweepSpec::vit(2, 32), None).is_err());
}

#[test]
fn svg_handles_empty_and_single_points() {
    let empty = loglog_svg("t", "x", "y", &[]);
    assert!(empty.ends_with("</svg>\n"));
    let one = loglog_svg(
        "t",
        "x",
        "y",
        &[Series {
            label: "a<b".into(),
            points: vec![(10.0, 1.0)],
        }],
    );
    assert!(one.contains("a&lt;b") && !one.contains("NaN"));
}
