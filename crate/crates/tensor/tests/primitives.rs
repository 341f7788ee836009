use mixerbench_tensor::{fft, Error, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn var(shape: &[usize], data: &[f64]) -> Var<f64> {
    Var::constant(Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap())
}

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn triple_loop(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn direct_conv(u: &[f64], h: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|t| (0..=t).map(|s| h[s] * u[t - s]).sum())
        .collect()
}

#[test]
fn matmul_identity_left() {
    let a = randn(&[3, 5], 1);
    let out = Var::constant(Tensor::<f64>::eye(3).unwrap())
        .matmul(&Var::constant(a.clone()))
        .unwrap();
    assert_eq!(out.value().data(), a.data());
}

#[test]
fn matmul_matches_triple_loop() {
    let (a, b) = (randn(&[3, 4], 2), randn(&[4, 2], 3));
    let out = Var::constant(a.clone()).matmul(&Var::constant(b.clone())).unwrap();
    let expected = triple_loop(a.data(), b.data(), 3, 4, 2);
    for (x, y) in out.value().data().iter().zip(&expected) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn batched_and_transposed_products() {
    let (a, b) = (randn(&[2, 3, 4], 4), randn(&[2, 5, 4], 5));
    let out = Var::constant(a.clone()).matmul_t(&Var::constant(b.clone())).unwrap();
    assert_eq!(out.shape(), &[2, 3, 5]);
    for batch in 0..2 {
        for i in 0..3 {
            for j in 0..5 {
                let e: f64 = (0..4).map(|p| a.at(&[batch, i, p]) * b.at(&[batch, j, p])).sum();
                assert!((out.value().at(&[batch, i, j]) - e).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn matmul_rejects_inner_mismatch() {
    let err = var(&[2, 3], &[0.0; 6]).matmul(&var(&[2, 2], &[0.0; 4])).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
}

#[test]
fn reduce_sum_of_zeros() {
    let z = Var::constant(Tensor::<f64>::zeros([4, 4]).unwrap());
    assert_eq!(z.sum().unwrap().value().item().unwrap(), 0.0);
}

#[test]
fn softmax_examples() {
    let s = var(&[3], &[1.0, 1.0, 1.0]).softmax(0).unwrap();
    for &v in s.value().data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = var(&[2], &[0.0, 2f64.ln()]).softmax(0).unwrap();
    assert!((s.value().data()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((s.value().data()[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn softmax_shift_invariance_and_normalization() {
    let x = randn(&[4, 7], 6);
    let a = Var::constant(x.clone()).softmax(1).unwrap();
    let b = Var::constant(x.map(|v| v + 123.5).unwrap()).softmax(1).unwrap();
    assert!(a.value().max_abs_diff(b.value()) < 1e-12);
    for row in a.value().data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&v| v > 0.0));
    }
    // along a leading axis
    let c = Var::constant(x).softmax(0).unwrap();
    for j in 0..7 {
        let s: f64 = (0..4).map(|i| c.value().at(&[i, j])).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_rejects_empty_axis() {
    let x = Var::constant(Tensor::<f64>::zeros([2, 0]).unwrap());
    assert!(x.softmax(1).is_err());
}

#[test]
fn masked_softmax_zeroes_infinite_bias() {
    let x = randn(&[2, 3, 3], 7);
    let mut bias = vec![0.0; 9];
    bias[1] = f64::NEG_INFINITY;
    bias[3] = f64::NEG_INFINITY;
    let bias = Tensor::from_vec([1, 3, 3], bias).unwrap();
    let y = Var::constant(x).softmax_masked(&bias).unwrap();
    for lead in 0..2 {
        assert_eq!(y.value().at(&[lead, 0, 1]), 0.0);
        assert_eq!(y.value().at(&[lead, 1, 0]), 0.0);
        let s: f64 = (0..3).map(|j| y.value().at(&[lead, 0, j])).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_examples() {
    let one = Var::constant(Tensor::<f64>::ones([4]).unwrap());
    let zero = Var::constant(Tensor::<f64>::zeros([4]).unwrap());
    let y = var(&[1, 4], &[3.0; 4]).layer_norm(&one, &zero, 1e-5).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));

    let one2 = Var::constant(Tensor::<f64>::ones([2]).unwrap());
    let zero2 = Var::constant(Tensor::<f64>::zeros([2]).unwrap());
    let y = var(&[2], &[-1.0, 1.0]).layer_norm(&one2, &zero2, 0.0).unwrap();
    assert_eq!(y.value().data(), &[-1.0, 1.0]);

    let empty = Var::constant(Tensor::<f64>::zeros([3, 0]).unwrap());
    let g0 = Var::constant(Tensor::<f64>::zeros([0]).unwrap());
    assert!(empty.layer_norm(&g0, &g0, 1e-5).is_err());
}

#[test]
fn layer_norm_matches_scalar_oracle() {
    let x = randn(&[8], 8);
    let gamma = randn(&[8], 9);
    let beta = randn(&[8], 10);
    let eps = 1e-5;
    let y = Var::constant(x.clone())
        .layer_norm(&Var::constant(gamma.clone()), &Var::constant(beta.clone()), eps)
        .unwrap();
    // two-pass evaluation with compensated sums
    let xs = x.data();
    let mean = xs.iter().map(|&v| v as f64).sum::<f64>() / 8.0;
    let var = xs.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / 8.0;
    for j in 0..8 {
        let e = (xs[j] - mean) / (var + eps).sqrt() * gamma.data()[j] + beta.data()[j];
        assert!((y.value().data()[j] - e).abs() < 1e-12);
    }
}

#[test]
fn fft_conv_examples() {
    let impulse = var(&[3, 1], &[1.0, 0.0, 0.0]);
    let u = var(&[3, 1], &[1.0, 2.0, 3.0]);
    let y = u.fft_conv(&impulse).unwrap();
    assert!(y.value().max_abs_diff(u.value()) < 1e-12);

    let h = var(&[3, 1], &[1.0, 1.0, 0.0]);
    let y = u.fft_conv(&h).unwrap();
    let expected = [1.0, 3.0, 5.0];
    for (a, b) in y.value().data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(fft::linear_conv(&[1.0, 2.0, 3.0], &[1.0, 1.0, 0.0]).unwrap().len(), 3);
}

#[test]
fn fft_conv_random_64_matches_direct() {
    let u = randn(&[64], 11).to_vec();
    let h = randn(&[64], 12).to_vec();
    let y = fft::linear_conv(&u, &h).unwrap();
    let d = direct_conv(&u, &h);
    for (a, b) in y.iter().zip(&d) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn fft_conv_equals_direct_for_lengths_1_to_128() {
    for n in 1..=128 {
        let u = randn(&[2, n, 3], 100 + n as u64);
        let h = randn(&[n, 3], 300 + n as u64);
        let y = Var::constant(u.clone()).fft_conv(&Var::constant(h.clone())).unwrap();
        for b in 0..2 {
            for ch in 0..3 {
                let uc: Vec<f64> = (0..n).map(|t| u.at(&[b, t, ch])).collect();
                let hc: Vec<f64> = (0..n).map(|t| h.at(&[t, ch])).collect();
                let d = direct_conv(&uc, &hc);
                for t in 0..n {
                    assert!((y.value().at(&[b, t, ch]) - d[t]).abs() < 1e-10, "n={n}");
                }
            }
        }
    }
}

#[test]
fn fft_conv_rejects_length_mismatch() {
    assert!(fft::linear_conv(&[1.0, 2.0], &[1.0]).is_err());
    let err = var(&[4, 2], &[0.0; 8]).fft_conv(&var(&[3, 2], &[0.0; 6])).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
}

#[test]
fn depthwise_conv_same_padding() {
    // x = [1,2,3], w = [1,10,100] => y[t] = x[t-1] + 10 x[t] + 100 x[t+1]
    let x = var(&[3, 1], &[1.0, 2.0, 3.0]);
    let w = var(&[3, 1], &[1.0, 10.0, 100.0]);
    let y = x.depthwise_conv1d(&w).unwrap();
    assert_eq!(y.value().data(), &[210.0, 321.0, 32.0]);
}

#[test]
fn shape_ops_round_trip() {
    let x = randn(&[2, 3, 4], 13);
    let v = Var::constant(x.clone());
    let p = v.permute(&[2, 0, 1]).unwrap();
    assert_eq!(p.shape(), &[4, 2, 3]);
    assert_eq!(p.value().at(&[3, 1, 2]), x.at(&[1, 2, 3]));
    let back = p.permute(&[1, 2, 0]).unwrap();
    assert_eq!(back.value().data(), x.data());

    let parts = [v.slice(1, 0, 1).unwrap(), v.slice(1, 1, 3).unwrap()];
    let joined = Var::concat(&parts, 1).unwrap();
    assert_eq!(joined.value().data(), x.data());

    let padded = v.pad(2, 1, 2).unwrap();
    assert_eq!(padded.shape(), &[2, 3, 7]);
    assert_eq!(padded.slice(2, 1, 5).unwrap().value().data(), x.data());

    let rolled = v.roll(1, 1).unwrap();
    assert_eq!(rolled.value().at(&[0, 0, 0]), x.at(&[0, 2, 0]));
    assert_eq!(rolled.roll(1, -1).unwrap().value().data(), x.data());
}

#[test]
fn embedding_lookup() {
    let table = var(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
    let e = table.embedding(&[2, 0, 2]).unwrap();
    assert_eq!(e.value().data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
    assert!(table.embedding(&[3]).is_err());
}

#[test]
fn broadcasting_add() {
    let a = var(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = var(&[3], &[10.0, 20.0, 30.0]);
    let c = var(&[2, 1], &[100.0, 200.0]);
    assert_eq!(a.add(&b).unwrap().value().data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    assert_eq!(a.add(&c).unwrap().value().data(), &[101.0, 102.0, 103.0, 204.0, 205.0, 206.0]);
}

#[test]
fn non_finite_output_is_an_error_when_checks_are_on() {
    mixerbench_tensor::instrument::with_finite_checks(true, || {
        let err = var(&[1], &[0.0]).recip().unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    });
    mixerbench_tensor::instrument::with_finite_checks(false, || {
        assert!(var(&[1], &[0.0]).recip().is_ok());
    });
}

#[test]
fn tape_is_single_use() {
    let tape = Tape::new();
    let x = tape.leaf(randn(&[3], 14));
    let loss = x.square().unwrap().sum().unwrap();
    tape.backward(&loss).unwrap();
    assert!(matches!(tape.backward(&loss), Err(Error::TapeConsumed)));
    assert!(matches!(x.square(), Err(Error::TapeConsumed)));
}

#[test]
fn square_sum_gradient_is_twice_input() {
    let tape = Tape::new();
    let x0 = randn(&[5], 15);
    let x = tape.leaf(x0.clone());
    let unused = tape.leaf(randn(&[2], 16));
    let loss = x.square().unwrap().sum().unwrap();
    let g = tape.backward(&loss).unwrap();
    for (a, b) in g.wrt(&x).unwrap().data().iter().zip(x0.data()) {
        assert_eq!(*a, 2.0 * b);
    }
    assert_eq!(g.wrt(&unused).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let tape = Tape::new();
    let x = tape.leaf(randn(&[3], 17));
    assert!(matches!(tape.backward(&x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn untracked_inputs_are_not_recorded() {
    let tape = Tape::<f64>::new();
    let a = Var::constant(randn(&[2], 18));
    let _ = a.exp().unwrap();
    assert!(tape.is_empty());
    let x = tape.leaf(randn(&[2], 19));
    let y = x.mul(&a).unwrap();
    assert!(y.is_tracked());
    assert_eq!(tape.ops(), vec!["leaf", "mul"]);
}
