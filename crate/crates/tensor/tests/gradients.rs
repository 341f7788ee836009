//! Every primitive's adjoint against central finite differences (float64).

use mixerbench_tensor::gradcheck::check;
use mixerbench_tensor::{Result, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn positive(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), 0.5, 2.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Contracts `y` with fixed random weights so every output element matters.
fn project(y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
    let w = Var::constant(randn(y.shape(), seed));
    y.mul(&w)?.sum()
}

fn assert_grad(name: &str, inputs: &[Tensor<f64>], f: impl Fn(&[Var<f64>]) -> Result<Var<f64>>) {
    let r = check(inputs, STEP, f).unwrap();
    assert!(
        r.passes(TOL),
        "{name}: rel {:.3e} abs {:.3e} over {} elements",
        r.max_rel_error,
        r.max_abs_error,
        r.checked
    );
}

#[test]
fn elementwise_binary() {
    let (a, b) = (randn(&[3, 4], 1), randn(&[4], 2));
    assert_grad("add", &[a.clone(), b.clone()], |v| project(&v[0].add(&v[1])?, 9));
    assert_grad("sub", &[a.clone(), b.clone()], |v| project(&v[0].sub(&v[1])?, 9));
    assert_grad("mul", &[a.clone(), b.clone()], |v| project(&v[0].mul(&v[1])?, 9));
    assert_grad("div", &[a, positive(&[3, 1], 3)], |v| project(&v[0].div(&v[1])?, 9));
}

#[test]
fn elementwise_unary() {
    let x = randn(&[2, 5], 4);
    let p = positive(&[2, 5], 5);
    assert_grad("exp", &[x.clone()], |v| project(&v[0].exp()?, 7));
    assert_grad("ln", &[p.clone()], |v| project(&v[0].ln()?, 7));
    assert_grad("sqrt", &[p.clone()], |v| project(&v[0].sqrt()?, 7));
    assert_grad("reciprocal", &[p], |v| project(&v[0].recip()?, 7));
    assert_grad("sin", &[x.clone()], |v| project(&v[0].sin()?, 7));
    assert_grad("silu", &[x.clone()], |v| project(&v[0].silu()?, 7));
    assert_grad("gelu", &[x.clone()], |v| project(&v[0].gelu()?, 7));
    assert_grad("softplus", &[x.clone()], |v| project(&v[0].softplus()?, 7));
    assert_grad("sigmoid", &[x.clone()], |v| project(&v[0].sigmoid()?, 7));
    assert_grad("scalar", &[x], |v| project(&v[0].mul_scalar(1.7)?.add_scalar(0.3)?, 7));
}

#[test]
fn products() {
    assert_grad("matmul shared", &[randn(&[2, 3, 4], 6), randn(&[4, 5], 7)], |v| {
        project(&v[0].matmul(&v[1])?, 8)
    });
    assert_grad("matmul batched", &[randn(&[2, 3, 4], 9), randn(&[2, 4, 5], 10)], |v| {
        project(&v[0].matmul(&v[1])?, 8)
    });
    assert_grad("matmul_t batched", &[randn(&[2, 3, 4], 11), randn(&[2, 5, 4], 12)], |v| {
        project(&v[0].matmul_t(&v[1])?, 8)
    });
    assert_grad("matmul_t shared", &[randn(&[3, 4], 13), randn(&[5, 4], 14)], |v| {
        project(&v[0].matmul_t(&v[1])?, 8)
    });
}

#[test]
fn layout_ops() {
    let x = randn(&[2, 3, 4], 15);
    assert_grad("transpose", &[x.clone()], |v| project(&v[0].permute(&[1, 2, 0])?, 3));
    assert_grad("reshape", &[x.clone()], |v| project(&v[0].reshape([6, 4])?, 3));
    assert_grad("slice", &[x.clone()], |v| project(&v[0].slice(2, 1, 3)?, 3));
    assert_grad("pad", &[x.clone()], |v| project(&v[0].pad(1, 2, 1)?, 3));
    assert_grad("concat", &[x.clone(), randn(&[2, 1, 4], 16)], |v| {
        project(&Var::concat(&[v[0].clone(), v[1].clone()], 1)?, 3)
    });
    assert_grad("broadcast_to", &[randn(&[3, 1], 17)], |v| project(&v[0].broadcast_to(&[2, 3, 4])?, 3));
    assert_grad("roll", &[x.clone()], |v| project(&v[0].roll(2, 3)?, 3));
    assert_grad("embedding", &[randn(&[4, 3], 18)], |v| project(&v[0].embedding(&[3, 1, 3])?, 3));
    assert_grad("reduce_sum", &[x.clone()], |v| project(&v[0].sum_axis(1, false)?, 3));
    assert_grad("reduce_mean", &[x], |v| project(&v[0].mean_axis(0, true)?, 3));
}

#[test]
fn normalization_and_softmax() {
    let x = randn(&[3, 6], 19);
    assert_grad("softmax last", &[x.clone()], |v| project(&v[0].softmax(1)?, 4));
    assert_grad("softmax first", &[x.clone()], |v| project(&v[0].softmax(0)?, 4));
    assert_grad("log_softmax", &[x.clone()], |v| project(&v[0].log_softmax()?, 4));
    let mut bias = vec![0.0; 18];
    bias[2] = f64::NEG_INFINITY;
    bias[7] = -3.0;
    let bias = Tensor::from_vec([1, 3, 6], bias).unwrap();
    assert_grad("masked softmax", &[randn(&[2, 3, 6], 20)], move |v| {
        project(&v[0].softmax_masked(&bias)?, 4)
    });
    assert_grad("layer_norm", &[x, randn(&[6], 21), randn(&[6], 22)], |v| {
        project(&v[0].layer_norm(&v[1], &v[2], 1e-5)?, 4)
    });
}

#[test]
fn convolutions() {
    assert_grad("fft_conv", &[randn(&[2, 9, 3], 23), randn(&[9, 3], 24)], |v| {
        project(&v[0].fft_conv(&v[1])?, 5)
    });
    assert_grad("depthwise_conv1d", &[randn(&[2, 7, 3], 25), randn(&[3, 3], 26)], |v| {
        project(&v[0].depthwise_conv1d(&v[1])?, 5)
    });
}

#[test]
fn softmax_cross_entropy() {
    // logits [4, 5], fixed class targets
    let targets = [1usize, 4, 0, 2];
    let mut onehot = vec![0.0; 20];
    for (i, &t) in targets.iter().enumerate() {
        onehot[i * 5 + t] = 1.0;
    }
    let onehot = Tensor::from_vec([4, 5], onehot).unwrap();
    assert_grad("cross entropy", &[randn(&[4, 5], 27)], move |v| {
        v[0].log_softmax()?
            .mul(&Var::constant(onehot.clone()))?
            .sum()?
            .mul_scalar(-0.25)
    });
}
