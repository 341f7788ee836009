//! Oracle-equivalence and gradient checks shared by `selftest` and the
//! acceptance run.

use mixerbench_core::mixers::{build_shift_mask, selective_scan, selective_scan_chunked, selective_scan_sequential, Mixer, MixerKind};
use mixerbench_core::oracle::{attention_loop, auroc_pairs, direct_causal_conv, max_abs_diff, mixer_grad_check, ssim_2d_loop};
use mixerbench_core::tasks::{auroc, dice, ssim};
use mixerbench_core::{Builder, Params};
use mixerbench_tensor::{fft, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Result;

pub const GRAD_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-10;
pub const MASK_TOL: f64 = 1e-30;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// Runs `f`, turning an error into a failed check.
    fn run(name: &str, f: impl FnOnce() -> Result<Check>) -> Check {
        f().unwrap_or_else(|e| Check::new(name, false, format!("error: {e}")))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Finite-difference gradients of every mixer at n=8, d=8 in float64.
pub fn mixer_gradients() -> Vec<Check> {
    MixerKind::ALL
        .iter()
        .map(|&kind| {
            let name = format!("grad/{kind}");
            Check::run(&name, || {
                let r = mixer_grad_check(kind, 8, 8, 25)?;
                Ok(Check::new(
                    &name,
                    r.passes(GRAD_TOL),
                    format!("max rel {:.2e}, max abs {:.2e} over {} elements", r.max_rel_error, r.max_abs_error, r.checked),
                ))
            })
        })
        .collect()
}

/// FFT causal convolution against the quadratic loop for n = 1..=128.
pub fn fft_conv() -> Check {
    Check::run("oracle/fft_conv", || {
        let mut worst: f64 = 0.0;
        let mut r = rng(1);
        for n in 1..=128usize {
            let u = Tensor::<f64>::randn([1, n, 2], 1.0, &mut r)?;
            let h = Tensor::<f64>::randn([n, 2], 1.0, &mut r)?;
            let y = Var::constant(u.clone()).fft_conv(&Var::constant(h.clone()))?.into_value();
            for ch in 0..2 {
                let uc: Vec<f64> = (0..n).map(|t| u.at(&[0, t, ch])).collect();
                let hc: Vec<f64> = (0..n).map(|t| h.at(&[t, ch])).collect();
                let direct = direct_causal_conv(&uc, &hc);
                let fast: Vec<f64> = (0..n).map(|t| y.at(&[0, t, ch])).collect();
                worst = worst.max(max_abs_diff(&fast, &direct));
                worst = worst.max(max_abs_diff(&fft::linear_conv(&uc, &hc)?, &direct));
            }
        }
        Ok(Check::new("oracle/fft_conv", worst < ORACLE_TOL, format!("n=1..128, max abs diff {worst:.2e}")))
    })
}

/// Chunked and taped selective scans against the sequential recurrence.
pub fn selective_scans() -> Check {
    Check::run("oracle/selective_scan", || {
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        let mut r = rng(2);
        let c = 3;
        for n in [1usize, 7, 32, 128] {
            for s in [1usize, 4, 16] {
                let u = Tensor::<f64>::randn([n, c], 1.0, &mut r)?;
                let dl = Tensor::<f64>::uniform([n, c], 0.01, 0.5, &mut r)?;
                let a = Tensor::<f64>::uniform([c, s], -3.0, -0.05, &mut r)?;
                let b = Tensor::<f64>::randn([n, s], 1.0, &mut r)?;
                let cm = Tensor::<f64>::randn([n, s], 1.0, &mut r)?;
                let seq = selective_scan_sequential(&u, &dl, &a, &b, &cm)?;
                for chunk in [1, 5, 16, n] {
                    let ch = selective_scan_chunked(&u, &dl, &a, &b, &cm, chunk)?;
                    worst = worst.max(ch.max_abs_diff(&seq));
                    cases += 1;
                }
                let batch = |t: &Tensor<f64>| -> Result<Var<f64>> {
                    Ok(Var::constant(t.reshape([1, t.shape()[0], t.shape()[1]])?))
                };
                let taped = selective_scan(&batch(&u)?, &batch(&dl)?, &Var::constant(a.clone()), &batch(&b)?, &batch(&cm)?)?;
                worst = worst.max(taped.value().reshape([n, c])?.max_abs_diff(&seq));
                cases += 1;
            }
        }
        Ok(Check::new(
            "oracle/selective_scan",
            worst < ORACLE_TOL,
            format!("{cases} evaluations, n<=128, s<=16, max abs diff {worst:.2e}"),
        ))
    })
}

/// Attention against the explicit-loop softmax at n=5.
pub fn attention_oracle() -> Check {
    Check::run("oracle/attention", || {
        let mut worst: f64 = 0.0;
        for (heads, seed) in [(1, 5), (2, 6)] {
            let mut params = Params::<f64>::new();
            let mixer = Mixer::new(&mut Builder::new(&mut params, &mut rng(seed)), MixerKind::Attention, 4, heads)?;
            let Mixer::Attention(a) = &mixer else {
                unreachable!("built an attention mixer")
            };
            let x = Tensor::<f64>::randn([1, 5, 4], 1.0, &mut rng(seed + 10))?;
            let y = mixer.forward(&params.bind(None), &Var::constant(x.clone()), None)?.into_value();
            let w = [
                params.get(a.wq).data(),
                params.get(a.wk).data(),
                params.get(a.wv).data(),
                params.get(a.wo).data(),
            ];
            worst = worst.max(max_abs_diff(y.data(), &attention_loop(x.data(), 5, 4, heads, w)));
        }
        Ok(Check::new("oracle/attention", worst < ORACLE_TOL, format!("n=5, max abs diff {worst:.2e}")))
    })
}

/// Shifted-window mask on an 8x8 grid, window 4, shift 2: region count and
/// post-softmax weight of every cross-region pair.
pub fn shift_mask() -> Check {
    Check::run("mask/shifted_window", || {
        let mask = build_shift_mask(&[8, 8], 4, 2)?;
        let regions = mask.num_regions();
        let bias = mask.bias::<f64>()?;
        let heads = 2;
        let mut params = Params::<f64>::new();
        let mixer = Mixer::new(&mut Builder::new(&mut params, &mut rng(11)), MixerKind::Attention, 8, heads)?;
        let Mixer::Attention(a) = &mixer else {
            unreachable!("built an attention mixer")
        };
        let m = mask.tokens_per_window();
        let x = Tensor::<f64>::randn([mask.num_windows(), m, 8], 3.0, &mut rng(12))?;
        let weights = a.weights(&params.bind(None), &Var::constant(x), Some(&bias))?.into_value();
        let mut worst: f64 = 0.0;
        let mut pairs = 0;
        for w in 0..mask.num_windows() {
            let labels = mask.window_labels(w);
            for h in 0..heads {
                for i in 0..m {
                    for j in 0..m {
                        if labels[i] != labels[j] {
                            worst = worst.max(weights.at(&[w * heads + h, i, j]));
                            pairs += 1;
                        }
                    }
                }
            }
        }
        Ok(Check::new(
            "mask/shifted_window",
            regions == 9 && worst < MASK_TOL,
            format!("{regions} regions, {pairs} cross-region pairs, max weight {worst:.2e}"),
        ))
    })
}

/// Worked metric examples and the scalar SSIM oracle.
pub fn metrics() -> Vec<Check> {
    let dice_check = Check::run("metric/dice", || {
        let cases = [
            (dice(&[1, 1, 0, 0], &[1, 0, 1, 0], 1)?, 0.5),
            (dice(&[1, 0, 1], &[1, 0, 1], 1)?, 1.0),
            (dice(&[1, 1, 0, 0], &[0, 0, 1, 1], 1)?, 0.0),
            (dice(&[0, 0], &[0, 0], 1)?, 1.0),
        ];
        let ok = cases.iter().all(|(got, want)| got == want);
        Ok(Check::new("metric/dice", ok, format!("{:?}", cases.map(|c| c.0))))
    });
    let auroc_check = Check::run("metric/auroc", || {
        let labels = [false, false, true, true];
        let got = auroc(&[0.1, 0.4, 0.35, 0.8], &labels)?;
        let sep = auroc(&[0.1, 0.2, 0.8, 0.9], &labels)?;
        let inv = auroc(&[0.9, 0.8, 0.2, 0.1], &labels)?;
        let pairs = auroc_pairs(&[0.1, 0.4, 0.35, 0.8], &labels);
        let ok = got == 0.75 && pairs == 0.75 && sep == 1.0 && inv == 0.0;
        Ok(Check::new("metric/auroc", ok, format!("4-sample case {got}, separated {sep}, inverted {inv}")))
    });
    let ssim_check = Check::run("metric/ssim", || {
        let mut r = rng(3);
        let x = Tensor::<f64>::uniform([256], 0.0, 1.0, &mut r)?.to_vec();
        let y = Tensor::<f64>::uniform([256], 0.0, 1.0, &mut r)?.to_vec();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let diff = (ssim(&x, &y, &[16, 16])? - ssim_2d_loop(&x, &y, 16, 16, hi - lo)).abs();
        let same = ssim(&x, &x, &[16, 16])?;
        let shifted: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        let moved = ssim(&shifted, &x, &[16, 16])?;
        let ok = diff < ORACLE_TOL && (same - 1.0).abs() < 1e-12 && moved < 1.0;
        Ok(Check::new(
            "metric/ssim",
            ok,
            format!("oracle diff {diff:.2e}, ssim(x,x) {same:.6}, shifted {moved:.4}"),
        ))
    });
    vec![dice_check, auroc_check, ssim_check]
}

/// Every check, in a fixed order.
pub fn all() -> Vec<Check> {
    let mut out = mixer_gradients();
    out.extend([fft_conv(), selective_scans(), attention_oracle(), shift_mask()]);
    out.extend(metrics());
    out
}
