use mixerbench_tensor::fft::{self, Complex, FftPlan};
use mixerbench_tensor::{Tensor, Var};
use proptest::prelude::*;

fn direct_conv(u: &[f64], h: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|t| (0..=t).map(|s| h[s] * u[t - s]).sum())
        .collect()
}

proptest! {
    #[test]
    fn fft_round_trip(x in prop::collection::vec(-10.0f64..10.0, 1..=256)) {
        let n = x.len().next_power_of_two();
        let plan = FftPlan::new(n).unwrap();
        let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(n, Complex::ZERO);
        plan.forward(&mut buf);
        plan.inverse(&mut buf);
        for (i, &v) in x.iter().enumerate() {
            prop_assert!((buf[i].re - v).abs() < 1e-12);
            prop_assert!(buf[i].im.abs() < 1e-12);
        }
        for c in &buf[x.len()..] {
            prop_assert!(c.re.abs() < 1e-12);
        }
    }

    #[test]
    fn real_fft_round_trip(log_n in 0u32..=8, seed in any::<u64>()) {
        let n = 1usize << log_n;
        let x: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 7) % 1000) as f64) / 100.0 - 5.0).collect();
        let back = fft::irfft(&fft::rfft(&x).unwrap(), n).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_conv_matches_direct(pair in (1usize..=128).prop_flat_map(|n| (
        prop::collection::vec(-2.0f64..2.0, n),
        prop::collection::vec(-2.0f64..2.0, n),
    ))) {
        let (u, h) = pair;
        let y = fft::linear_conv(&u, &h).unwrap();
        for (a, b) in y.iter().zip(direct_conv(&u, &h)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, x in prop::collection::vec(-50.0f64..50.0, 30), shift in -100.0f64..100.0) {
        let cols = 30 / rows;
        let data = x[..rows * cols].to_vec();
        let t = Tensor::from_vec([rows, cols], data.clone()).unwrap();
        let s = Var::constant(t).softmax(1).unwrap();
        for row in s.value().data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted = Tensor::from_vec([rows, cols], data.iter().map(|v| v + shift).collect()).unwrap();
        let s2 = Var::constant(shifted).softmax(1).unwrap();
        prop_assert!(s.value().max_abs_diff(s2.value()) < 1e-12);
    }
}
