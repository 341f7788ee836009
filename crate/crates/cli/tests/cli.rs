use std::path::Path;
use std::process::{Command, Output};

use mixerbench_cli::{config_entries, sweep_spec, BenchFlags, ModelArgs, RunManifest};
use mixerbench_core::backbones::BackboneKind;
use mixerbench_core::mixers::MixerKind;

fn mixerbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixerbench"))
        .args(args)
        .env_remove("MIXERBENCH_THREADS")
        .output()
        .expect("spawn mixerbench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

const QUICK: [&str; 4] = ["--trials", "1", "--warmup", "1"];

#[test]
fn selftest_passes_every_check() {
    let o = mixerbench(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("10/10 checks passed"), "{out}");
    assert!(!out.contains("FAIL"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = mixerbench(&["bench", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(mixerbench(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = mixerbench(&["bench", "--patch", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error:") && err.contains("patch_size"), "{err}");

    let o = Command::new(env!("CARGO_BIN_EXE_mixerbench"))
        .args(["selftest"])
        .env("MIXERBENCH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MIXERBENCH_THREADS"));
}

#[test]
fn bench_writes_one_row_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h8");
    let mut args = vec!["bench", "--backbone", "vit", "--mixer", "hyena", "--patch", "8", "--extent", "64", "--rank", "2"];
    args.extend(QUICK);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = out.join("bench.csv");
    assert_eq!(
        header(&csv),
        ["backbone", "mixer", "rank", "patch", "window", "tokens", "mean_time_s", "peak_bytes", "flops", "status"]
    );
    let r = rows(&csv);
    assert_eq!(r.len(), 1);
    assert_eq!(&r[0][0], "vit");
    assert_eq!(&r[0][1], "hyena");
    assert_eq!(&r[0][5], "64");
    assert_eq!(&r[0][9], "ok");
    assert!(r[0][6].parse::<f64>().unwrap() > 0.0);

    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m.artifacts, ["bench.csv"]);
    assert_eq!(m.seed, 0);
    assert_eq!(m.config_hash.len(), 64);
    assert_eq!(m.command_line[1], "bench");
    let manifests = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("manifest"))
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn identical_runs_differ_only_in_timing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["bench", "--mixer", "mamba_vision", "--patch", "16", "--extent", "64", "--seed", "3"];
        args.extend(QUICK);
        args.extend(["--out", out.to_str().unwrap()]);
        assert!(mixerbench(&args).status.success());
        rows(&out.join("bench.csv"))
    };
    let (a, b) = (run("a"), run("b"));
    for (x, y) in a.iter().zip(&b) {
        for col in (0..x.len()).filter(|&c| c != 6) {
            assert_eq!(x[col], y[col], "column {col}");
        }
    }
}

#[test]
fn config_file_and_flags_combine_with_flags_winning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "# small model\nmixer = hyena\nembed_dim = 16\nnum_heads = 2\npatch_size = 16\n").unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["bench", "--config", cfg.to_str().unwrap(), "--mixer", "attention", "--extent", "64"];
    args.extend(QUICK);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("bench.csv"));
    assert_eq!(&r[0][1], "attention");
    assert_eq!(&r[0][3], "16");

    let entries = config_entries("a = 1 # note\n\n b=two\n").unwrap();
    assert_eq!(entries, [("a".to_string(), "1".to_string()), ("b".to_string(), "two".to_string())]);
    assert!(config_entries("no equals sign").is_err());
}

#[test]
fn swin_defaults_follow_the_mixer() {
    let args = ModelArgs {
        backbone: Some("swin".into()),
        mixer: Some("hyena".into()),
        ..Default::default()
    };
    let cfg = args.resolve().unwrap();
    assert_eq!(cfg.backbone, BackboneKind::Swin);
    assert!(!cfg.shift_enabled);
    let attn = ModelArgs {
        backbone: Some("swin".into()),
        ..Default::default()
    };
    assert!(attn.resolve().unwrap().shift_enabled);
    let bad = ModelArgs {
        backbone: Some("swin".into()),
        mixer: Some("hyena".into()),
        shift_enabled: Some("true".into()),
        ..Default::default()
    };
    assert!(bad.resolve().is_err());
}

#[test]
fn sweep_spec_narrows_grid_from_flags() {
    let flags = BenchFlags {
        extent: 64,
        channels: 1,
        trials: 1,
        warmup: 1,
        budget_gb: 4.0,
        seed: 0,
    };
    let all = sweep_spec(&ModelArgs::default(), &flags).unwrap();
    assert_eq!(all.mixers.len(), 3);
    assert_eq!(all.sizes, [32, 16, 8, 4]);
    let narrow = ModelArgs {
        mixer: Some("hyena".into()),
        patch_size: Some("8".into()),
        embed_dim: Some("32".into()),
        ..Default::default()
    };
    let s = sweep_spec(&narrow, &flags).unwrap();
    assert_eq!(s.mixers, [MixerKind::Hyena]);
    assert_eq!(s.sizes, [8]);
    assert_eq!(s.template.embed_dim, 32);
    let swin = ModelArgs {
        backbone: Some("swin".into()),
        ..Default::default()
    };
    assert_eq!(sweep_spec(&swin, &flags).unwrap().sizes, [4, 8, 16]);
}

#[test]
fn sweep_context_covers_mixers_by_patches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec!["sweep-context", "--backbone", "vit", "--extent", "64", "--rank", "2", "--embed-dim", "16", "--num-heads", "2"];
    args.extend(QUICK);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("bench.csv"));
    assert_eq!(r.len(), 12);
    for mixer in ["attention", "hyena", "mamba_vision"] {
        let patches: Vec<&str> = r.iter().filter(|x| &x[1] == mixer).map(|x| x.get(3).unwrap()).collect();
        assert_eq!(patches, ["32", "16", "8", "4"]);
    }
    let m = RunManifest::read(&out).unwrap();
    assert!(m.artifacts.contains(&"vit_attention_time.svg".to_string()));
    assert!(m.artifacts.contains(&"vit_hyena_mem.svg".to_string()));
    for a in &m.artifacts {
        assert!(out.join(a).exists(), "{a}");
    }
}

#[test]
fn sweep_marks_over_budget_cells_with_x() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oom");
    let mut args = vec!["sweep-context", "--extent", "64", "--mixer", "attention", "--budget-gb", "0.00002"];
    args.extend(QUICK);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("bench.csv"));
    assert_eq!(r.len(), 4);
    assert!(r.iter().any(|x| &x[9] == "X"));
    assert!(r.iter().filter(|x| &x[9] == "X").all(|x| x[6].is_empty()));
}

#[test]
fn shift_ablation_emits_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("shift");
    let mut args = vec![
        "sweep-context", "--backbone", "swin", "--extent", "64", "--window", "4", "--shift-ablation",
    ];
    args.extend(QUICK);
    args.extend(["--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&out.join("shift_ablation.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!((&r[0][1], &r[1][1]), ("true", "false"));
    assert!(r.iter().all(|x| &x[5] == "ok"));
    assert!(r[0][6].parse::<f64>().unwrap() > 0.0);
    assert_eq!(RunManifest::read(&out).unwrap().artifacts, ["shift_ablation.csv"]);
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    let model = ["--patch", "8", "--embed-dim", "16", "--num-heads", "2", "--depth", "1"];
    let data = ["--task", "denoising", "--extent", "32", "--samples", "10", "--seed", "4"];
    let mut args = vec!["train"];
    args.extend(model);
    args.extend(data);
    args.extend(["--epochs", "0", "--max-steps", "4", "--batch-size", "2", "--eval-every", "2", "--out", out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained 4 steps"));
    for f in ["checkpoint.mxck", "curve.csv", "model.cfg", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(header(&out.join("curve.csv")), ["step", "train_loss", "val_loss", "lr"]);
    assert_eq!(rows(&out.join("curve.csv")).len(), 2);

    let ckpt = out.join("checkpoint.mxck");
    let cfg = out.join("model.cfg");
    let eval_out = dir.path().join("eval");
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--config", cfg.to_str().unwrap()];
    args.extend(data);
    args.extend(["--out", eval_out.to_str().unwrap()]);
    let o = mixerbench(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ssim "), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval.json")).unwrap()).unwrap();
    let (lo, hi) = (report["ci"][0].as_f64().unwrap(), report["ci"][1].as_f64().unwrap());
    assert!(lo <= hi);
    assert_eq!(report["samples"], 2);
    assert_eq!(
        RunManifest::read(&eval_out).unwrap().config_hash,
        RunManifest::read(&out).unwrap().config_hash
    );

    // a different architecture must not accept these weights
    let mut args = vec!["eval", "--checkpoint", ckpt.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--embed-dim", "32"];
    args.extend(data);
    let o = mixerbench(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hash"));
}
