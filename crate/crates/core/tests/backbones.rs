use mixerbench_core::backbones::grid::{depth_to_space, space_to_depth, upsample_nearest};
use mixerbench_core::backbones::*;
use mixerbench_core::{Builder, MixerKind, Params};
use mixerbench_tensor::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], seed: u64) -> Var<f64> {
    Var::constant(Tensor::randn(shape.to_vec(), 1.0, &mut rng(seed)).unwrap())
}

#[test]
fn token_counts_follow_patch_size() {
    let img = Var::constant(Tensor::<f32>::zeros([1, 1024, 1024]).unwrap());
    assert_eq!(patchify(&img, 16).unwrap().shape(), &[4096, 256]);
    let vol = Var::constant(Tensor::<f32>::zeros([1, 256, 256, 64]).unwrap());
    assert_eq!(patchify(&vol, 8).unwrap().shape(), &[8192, 512]);
    assert!(patchify(&Var::constant(Tensor::<f32>::zeros([1, 30, 32]).unwrap()), 4).is_err());

    let vit = |p| ModelConfig::vit(MixerKind::Attention, 2, p);
    assert_eq!(context_length(&vit(32), &[1024, 1024]), 1024);
    assert_eq!(context_length(&vit(8), &[1024, 1024]), 16384);
    assert_eq!(context_length(&ModelConfig::swin(MixerKind::Attention, 2, 2, 16), &[1024, 1024]), 256);
}

#[test]
fn identity_embedding_round_trips() {
    for (shape, p) in [(vec![3, 16, 8], 4), (vec![2, 8, 8, 4], 2), (vec![1, 32, 32], 8)] {
        let x = randn(&shape, 1);
        let tokens = patchify(&x, p).unwrap();
        let width = tokens.shape()[1];
        let embedded = tokens.matmul(&Var::constant(Tensor::eye(width).unwrap())).unwrap();
        let grid: Vec<usize> = shape[1..].iter().map(|e| e / p).collect();
        let back = unpatchify(&embedded, &grid, shape[0], p).unwrap();
        assert_eq!(back.value().max_abs_diff(x.value()), 0.0);
    }
}

#[test]
fn patch_rows_hold_contiguous_pixels() {
    let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
    let x = Var::constant(Tensor::from_vec([1, 4, 4], data).unwrap());
    let t = patchify(&x, 2).unwrap();
    assert_eq!(t.value().data()[..4], [0.0, 1.0, 4.0, 5.0]);
    assert_eq!(t.value().data()[4..8], [2.0, 3.0, 6.0, 7.0]);
}

#[test]
fn window_partition_shapes_and_round_trip() {
    let g = randn(&[8, 8, 5], 2);
    let (w, padded) = window_partition(&g, 4).unwrap();
    assert_eq!(w.shape(), &[4, 16, 5]);
    assert_eq!(padded, vec![8, 8]);
    assert_eq!(window_reverse(&w, &padded, &[8, 8], 4).unwrap().value().max_abs_diff(g.value()), 0.0);

    let g3 = randn(&[4, 4, 4, 3], 3);
    let (w3, p3) = window_partition(&g3, 2).unwrap();
    assert_eq!(w3.shape(), &[8, 8, 3]);
    assert_eq!(window_reverse(&w3, &p3, &[4, 4, 4], 2).unwrap().value().max_abs_diff(g3.value()), 0.0);

    // the first window holds the top-left 4x4 block in raster order
    let data: Vec<f64> = (0..64).map(|v| v as f64).collect();
    let g = Var::constant(Tensor::from_vec([8, 8, 1], data).unwrap());
    let (w, _) = window_partition(&g, 4).unwrap();
    assert_eq!(w.value().data()[..6], [0.0, 1.0, 2.0, 3.0, 8.0, 9.0]);

    for (grid, win, seed) in [(vec![6, 10], 4, 4), (vec![5, 3, 7], 2, 5), (vec![9, 9], 8, 6)] {
        let mut shape = grid.clone();
        shape.push(2);
        let g = randn(&shape, seed);
        let (w, padded) = window_partition(&g, win).unwrap();
        assert!(padded.iter().all(|p| p % win == 0));
        let back = window_reverse(&w, &padded, &grid, win).unwrap();
        assert_eq!(back.value().max_abs_diff(g.value()), 0.0);
    }
}

#[test]
fn cyclic_shift_inverse_and_identity() {
    let g = randn(&[8, 8, 3], 7);
    assert_eq!(cyclic_shift(&g, 0).unwrap().value().max_abs_diff(g.value()), 0.0);
    let s = cyclic_shift(&g, 2).unwrap();
    assert!(s.value().max_abs_diff(g.value()) > 0.0);
    assert_eq!(s.value().at(&[0, 0, 0]), g.value().at(&[2, 2, 0]));
    assert_eq!(inverse_cyclic_shift(&s, 2).unwrap().value().max_abs_diff(g.value()), 0.0);
}

#[test]
fn depth_space_and_upsampling() {
    let g = randn(&[4, 6, 3], 8);
    let s = space_to_depth(&g, 2).unwrap();
    assert_eq!(s.shape(), &[2, 3, 12]);
    assert_eq!(depth_to_space(&s, 2).unwrap().value().max_abs_diff(g.value()), 0.0);
    let u = upsample_nearest(&g, 2).unwrap();
    assert_eq!(u.shape(), &[8, 12, 3]);
    assert_eq!(u.value().at(&[5, 7, 1]), g.value().at(&[2, 3, 1]));
}

fn build(cfg: &ModelConfig, image: &ImageSpec, head: HeadSpec) -> (Model, Params<f64>) {
    Model::build::<f64>(cfg, image, head, 11).unwrap()
}

#[test]
fn vit_depth_zero_classifies_embedded_tokens() {
    let mut cfg = ModelConfig::vit(MixerKind::Attention, 2, 8);
    cfg.depth = vec![0];
    cfg.embed_dim = 16;
    let image = ImageSpec::new(1, &[32, 32]);
    let (m, p) = build(&cfg, &image, HeadSpec::Classify { classes: 3 });
    let Backbone::Vit(v) = &m.backbone else { unreachable!() };
    assert!(v.norm.is_none());
    let x = randn(&[1, 32, 32], 9);
    let b = p.bind(None);
    let tokens = v.embed(&b, &x).unwrap();
    let Head::Classify(l) = &m.head else { unreachable!() };
    let expected = l.forward(&b, &tokens.mean_axis(0, true).unwrap()).unwrap();
    let y = m.forward(&b, &x).unwrap();
    assert_eq!(y.shape(), &[3]);
    assert!(y.value().max_abs_diff(&expected.value().reshape([3]).unwrap()) < 1e-12);
}

#[test]
fn vit_preserves_token_count() {
    for (extent, n) in [(16, 16), (32, 64), (64, 256)] {
        for kind in MixerKind::ALL {
            let mut cfg = ModelConfig::vit(kind, 2, 4);
            cfg.embed_dim = 16;
            let image = ImageSpec::new(1, &[extent, extent]);
            let (m, p) = build(&cfg, &image, HeadSpec::Dense { out_channels: 1 });
            let f = m.features(&p.bind(None), &randn(&[1, extent, extent], 10)).unwrap();
            let side = extent / 4;
            for level in &f {
                assert_eq!(level.shape(), &[side, side, 16]);
                assert_eq!(side * side, n);
            }
        }
    }
}

#[test]
fn vit_attention_without_positions_commutes_with_patch_permutation() {
    let mut cfg = ModelConfig::vit(MixerKind::Attention, 2, 4);
    cfg.embed_dim = 16;
    cfg.pos_embed = PosEmbed::None;
    let image = ImageSpec::new(2, &[16, 16]);
    let (m, p) = build(&cfg, &image, HeadSpec::Classify { classes: 2 });
    let x = randn(&[2, 16, 16], 12);
    let tokens = patchify(&x, 4).unwrap();
    let mut perm: Vec<usize> = (0..16).collect();
    perm.shuffle(&mut rng(13));
    let rows = |t: &Tensor<f64>, w: usize| {
        let d: Vec<f64> = perm.iter().flat_map(|&i| t.data()[i * w..(i + 1) * w].to_vec()).collect();
        Tensor::from_vec([16, w], d).unwrap()
    };
    let permuted = Var::constant(rows(tokens.value(), 32));
    let x2 = unpatchify(&permuted, &[4, 4], 2, 4).unwrap();
    let b = p.bind(None);
    let f1 = m.features(&b, &x).unwrap()[2].value().reshape([16, 16]).unwrap();
    let f2 = m.features(&b, &x2).unwrap()[2].value().reshape([16, 16]).unwrap();
    assert!(rows(&f1, 16).max_abs_diff(&f2) < 1e-10);
}

#[test]
fn swin_stage_grids_and_widths() {
    let mut cfg = ModelConfig::swin(MixerKind::Attention, 2, 2, 4);
    cfg.embed_dim = 8;
    cfg.depth = vec![2, 2, 2, 2];
    let image = ImageSpec::new(1, &[64, 64]);
    let (m, p) = build(&cfg, &image, HeadSpec::Dense { out_channels: 2 });
    let f = m.features(&p.bind(None), &randn(&[1, 64, 64], 14)).unwrap();
    let shapes: Vec<Vec<usize>> = f.iter().map(|v| v.shape().to_vec()).collect();
    assert_eq!(shapes, vec![vec![32, 32, 8], vec![16, 16, 16], vec![8, 8, 32], vec![4, 4, 64]]);
    let y = m.forward(&p.bind(None), &randn(&[1, 64, 64], 14)).unwrap();
    assert_eq!(y.shape(), &[2, 64, 64]);

    let Backbone::Swin(s) = &m.backbone else { unreachable!() };
    assert_eq!((s.shift_for(0), s.shift_for(1), s.shift_for(2), s.shift_for(3)), (None, Some(2), None, Some(2)));
}

#[test]
fn swin_rejects_grids_smaller_than_the_window() {
    let cfg = ModelConfig::swin(MixerKind::Hyena, 2, 2, 8);
    let err = Model::build::<f32>(&cfg, &ImageSpec::new(1, &[64, 64]), HeadSpec::Dense { out_channels: 1 }, 0)
        .unwrap_err()
        .to_string();
    assert!(err.contains("stage 3") && err.contains("smaller than window 8"), "{err}");
}

fn block(kind: MixerKind, dim: usize, seed: u64) -> (Params<f64>, Block) {
    let mut r = rng(seed);
    let mut p = Params::new();
    let b = Block::new(&mut Builder::new(&mut p, &mut r), kind, dim, 2).unwrap();
    (p, b)
}

#[test]
fn unshifted_encodings_agree() {
    for kind in MixerKind::ALL {
        let (p, b) = block(kind, 8, 15);
        let x = randn(&[8, 8, 8], 16);
        let bound = p.bind(None);
        let bypass = b.forward_windowed(&bound, &x, 4, None).unwrap();
        let zero = b.forward_windowed(&bound, &x, 4, Some(0)).unwrap();
        assert_eq!(bypass.value().max_abs_diff(zero.value()), 0.0, "{kind}");
    }
    let (p, b) = block(MixerKind::Hyena, 8, 15);
    assert!(b.forward_windowed(&p.bind(None), &randn(&[8, 8, 8], 16), 4, Some(2)).is_err());
}

#[test]
fn shifted_windows_change_attention_output() {
    let (p, b) = block(MixerKind::Attention, 8, 17);
    let x = randn(&[8, 8, 8], 18);
    let bound = p.bind(None);
    let plain = b.forward_windowed(&bound, &x, 4, None).unwrap();
    let shifted = b.forward_windowed(&bound, &x, 4, Some(2)).unwrap();
    assert!(plain.value().max_abs_diff(shifted.value()) > 1e-3);
}

#[test]
fn single_window_equals_global_attention() {
    for grid in [vec![4, 4], vec![2, 2, 2]] {
        let (p, b) = block(MixerKind::Attention, 8, 19);
        let mut shape = grid.clone();
        shape.push(8);
        let x = randn(&shape, 20);
        let bound = p.bind(None);
        let windowed = b.forward_windowed(&bound, &x, grid[0], None).unwrap();
        let n: usize = grid.iter().product();
        let global = b.forward_seq(&bound, &x.reshape([1, n, 8]).unwrap(), None).unwrap();
        let diff = windowed.value().reshape([1, n, 8]).unwrap().max_abs_diff(global.value());
        assert!(diff < 1e-6, "{diff}");
    }
}

#[test]
fn parameter_counts() {
    let image = ImageSpec::new(1, &[128, 128]);
    let head = HeadSpec::Dense { out_channels: 1 };
    for kind in [MixerKind::Hyena, MixerKind::MambaVision, MixerKind::Attention] {
        let counts: Vec<ParamCount> = [4, 8]
            .iter()
            .map(|&w| {
                let cfg = ModelConfig::swin(kind, 2, 2, w);
                let (m, p) = Model::build::<f32>(&cfg, &image, head, 0).unwrap();
                m.param_count(&p)
            })
            .collect();
        assert_eq!(counts[0], counts[1], "{kind}");
    }

    // ViT patch 16 vs 32: only the embedding and decoder differ
    let image = ImageSpec::new(1, &[64, 64]);
    let shared = |p: &Params<f32>| -> Vec<(String, usize)> {
        p.iter()
            .filter(|(n, _)| n.starts_with("backbone.") && !n.starts_with("backbone.embed"))
            .map(|(n, t)| (n.to_string(), t.numel()))
            .collect()
    };
    let (m16, p16) = Model::build::<f32>(&ModelConfig::vit(MixerKind::Hyena, 2, 16), &image, head, 0).unwrap();
    let (m32, p32) = Model::build::<f32>(&ModelConfig::vit(MixerKind::Hyena, 2, 32), &image, head, 0).unwrap();
    assert_eq!(shared(&p16), shared(&p32));
    let (c16, c32) = (m16.param_count(&p16), m32.param_count(&p32));
    let embed = |p: &Params<f32>| p.count("backbone.embed");
    assert_eq!(c16.backbone - embed(&p16), c32.backbone - embed(&p32));
    assert_ne!(c16.head, c32.head);

    // doubling the width about quadruples the block weights
    let blocks = |d: usize| {
        let mut cfg = ModelConfig::vit(MixerKind::Attention, 2, 16);
        cfg.embed_dim = d;
        let (_, p) = Model::build::<f32>(&cfg, &image, head, 0).unwrap();
        p.count("backbone.blocks")
    };
    let ratio = blocks(128) as f64 / blocks(64) as f64;
    assert!((3.9..=4.0).contains(&ratio), "{ratio}");
}

#[test]
fn every_backbone_and_mixer_trains_end_to_end() {
    let cases: Vec<(ModelConfig, ImageSpec)> = MixerKind::ALL
        .iter()
        .flat_map(|&k| {
            let mut vit = ModelConfig::vit(k, 2, 8);
            vit.embed_dim = 16;
            let mut vit3 = ModelConfig::vit(k, 3, 8);
            vit3.embed_dim = 16;
            let mut swin = ModelConfig::swin(k, 2, 2, 4);
            swin.embed_dim = 8;
            swin.depth = vec![2, 1, 1, 1];
            let mut swin3 = swin.clone();
            swin3.spatial_rank = 3;
            vec![
                (vit.clone(), ImageSpec::new(1, &[32, 32])),
                (vit, ImageSpec::new(3, &[32, 32])),
                (vit3, ImageSpec::new(1, &[16, 16, 16])),
                (swin.clone(), ImageSpec::new(1, &[64, 64])),
                (swin, ImageSpec::new(3, &[64, 64])),
                (swin3, ImageSpec::new(1, &[64, 64, 64])),
            ]
        })
        .collect();
    for (cfg, image) in cases {
        for head in [HeadSpec::Dense { out_channels: 2 }, HeadSpec::Classify { classes: 2 }] {
            let (m, p) = Model::build::<f32>(&cfg, &image, head, 1).unwrap();
            let tape = Tape::new();
            let b = p.bind(Some(&tape));
            let x = Var::constant(Tensor::randn(image.shape(), 1.0, &mut rng(2)).unwrap());
            let y = m.forward(&b, &x).unwrap();
            let loss = y.square().unwrap().mean().unwrap();
            let g = tape.backward(&loss).unwrap();
            let grads = b.grads(&g).unwrap();
            assert!(grads.iter().all(|t| t.is_finite()));
            assert_eq!(grads.len(), p.len(), "{cfg:?}");
        }
    }
}

#[test]
fn config_text_round_trip_and_validation() {
    let mut cfg = ModelConfig::swin(MixerKind::Attention, 3, 4, 8);
    cfg.depth = vec![2, 2, 6, 2];
    let parsed = ModelConfig::parse(&cfg.to_text()).unwrap();
    assert_eq!(parsed, cfg);
    assert_eq!(parsed.hash(), cfg.hash());
    let text = "# comment\nbackbone = vit\nmixer = hyena\npatch_size = 8  # trailing\n";
    let c = ModelConfig::parse(text).unwrap();
    assert_eq!((c.mixer, c.patch_size), (MixerKind::Hyena, 8));
    assert_ne!(c.hash(), cfg.hash());

    assert!(ModelConfig::parse("patch_size = 2").is_err());
    assert!(ModelConfig::parse("backbone = swin\npatch_size = 8\ndepth = 2,2,2,2").is_err());
    assert!(ModelConfig::parse("backbone = swin\npatch_size = 2\nwindow_size = 7\ndepth = 2,2,2,2").is_err());
    assert!(ModelConfig::parse("backbone = swin\nmixer = hyena\npatch_size = 2\ndepth = 2,2,2,2\nshift_enabled = true").is_err());
    assert!(ModelConfig::parse("backbone = swin\nmixer = mamba_vision\npatch_size = 2\ndepth = 2,2,2,2\nshift_enabled = true").is_err());
    assert!(ModelConfig::parse("colour = blue").is_err());
    assert!(ModelConfig::parse("embed_dim = 30\nnum_heads = 4").is_err());
    assert!(ModelConfig::parse("mixer = mamba_vision\nembed_dim = 33").is_err());
    assert!(ModelConfig::parse("spatial_rank = 4").is_err());
}
