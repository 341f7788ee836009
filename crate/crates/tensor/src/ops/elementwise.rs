use crate::instrument::add_flops;
use crate::kernels::{binary, sum_to};
use crate::tape::record;
use crate::{Element, Result, Tensor, Var};

fn unary<T: Element>(
    op: &'static str,
    x: &Var<T>,
    f: impl Fn(T) -> T,
    // derivative given input and output
    df: impl Fn(T, T) -> T + 'static,
) -> Result<Var<T>> {
    let y = x.value().map(f)?;
    let (xs, ys) = (x.value().clone(), y.clone());
    record(op, &[x], y, move |g| {
        let d = xs.zip_map(&ys, &df)?;
        Ok(vec![Some(g.zip_map(&d, |a, b| a * b)?)])
    })
}

pub fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Element>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Element>(x: T) -> T {
    let inner = T::c(GELU_C) * (x + T::c(GELU_A) * x * x * x);
    T::c(0.5) * x * (T::one() + inner.tanh())
}

fn gelu_grad<T: Element>(x: T) -> T {
    let inner = T::c(GELU_C) * (x + T::c(GELU_A) * x * x * x);
    let t = inner.tanh();
    let dinner = T::c(GELU_C) * (T::one() + T::c(3.0 * GELU_A) * x * x);
    T::c(0.5) * (T::one() + t) + T::c(0.5) * x * (T::one() - t * t) * dinner
}

impl<T: Element> Var<T> {
    pub fn add(&self, rhs: &Var<T>) -> Result<Var<T>> {
        let out = binary("add", self.value(), rhs.value(), |a, b| a + b)?;
        let (sa, sb) = (self.shape().to_vec(), rhs.shape().to_vec());
        record("add", &[self, rhs], out, move |g| {
            Ok(vec![Some(sum_to(g, &sa)?), Some(sum_to(g, &sb)?)])
        })
    }

    pub fn sub(&self, rhs: &Var<T>) -> Result<Var<T>> {
        let out = binary("sub", self.value(), rhs.value(), |a, b| a - b)?;
        let (sa, sb) = (self.shape().to_vec(), rhs.shape().to_vec());
        record("sub", &[self, rhs], out, move |g| {
            let gb = sum_to(g, &sb)?.map(|x| -x)?;
            Ok(vec![Some(sum_to(g, &sa)?), Some(gb)])
        })
    }

    /// Element-wise product; counted as one FLOP per output element.
    pub fn mul(&self, rhs: &Var<T>) -> Result<Var<T>> {
        let out = binary("mul", self.value(), rhs.value(), |a, b| a * b)?;
        add_flops(out.numel() as u64);
        let (a, b) = (self.value().clone(), rhs.value().clone());
        let (ta, tb) = (self.is_tracked(), rhs.is_tracked());
        record("mul", &[self, rhs], out, move |g| {
            let ga = if ta { Some(sum_to(&binary("mul", g, &b, |x, y| x * y)?, a.shape())?) } else { None };
            let gb = if tb { Some(sum_to(&binary("mul", g, &a, |x, y| x * y)?, b.shape())?) } else { None };
            Ok(vec![ga, gb])
        })
    }

    pub fn div(&self, rhs: &Var<T>) -> Result<Var<T>> {
        let out = binary("div", self.value(), rhs.value(), |a, b| a / b)?;
        let (a, b) = (self.value().clone(), rhs.value().clone());
        record("div", &[self, rhs], out, move |g| {
            let ga = sum_to(&binary("div", g, &b, |x, y| x / y)?, a.shape())?;
            let q = binary("div", &a, &binary("mul", &b, &b, |x, y| x * y)?, |x, y| x / y)?;
            let gb = sum_to(&binary("mul", g, &q, |x, y| -x * y)?, b.shape())?;
            Ok(vec![Some(ga), Some(gb)])
        })
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<T>> {
        let c = T::c(c);
        let out = self.value().map(|x| x + c)?;
        record("add_scalar", &[self], out, |g| Ok(vec![Some(g.clone())]))
    }

    pub fn mul_scalar(&self, c: f64) -> Result<Var<T>> {
        let c = T::c(c);
        let out = self.value().map(|x| x * c)?;
        record("mul_scalar", &[self], out, move |g| Ok(vec![Some(g.map(|x| x * c)?)]))
    }

    pub fn neg(&self) -> Result<Var<T>> {
        self.mul_scalar(-1.0)
    }

    pub fn exp(&self) -> Result<Var<T>> {
        unary("exp", self, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Result<Var<T>> {
        unary("ln", self, |x| x.ln(), |x, _| x.recip())
    }

    pub fn sqrt(&self) -> Result<Var<T>> {
        unary("sqrt", self, |x| x.sqrt(), |_, y| T::c(0.5) / y)
    }

    pub fn recip(&self) -> Result<Var<T>> {
        unary("reciprocal", self, |x| x.recip(), |_, y| -y * y)
    }

    pub fn square(&self) -> Result<Var<T>> {
        unary("square", self, |x| x * x, |x, _| T::c(2.0) * x)
    }

    pub fn sin(&self) -> Result<Var<T>> {
        unary("sin", self, |x| x.sin(), |x, _| x.cos())
    }

    pub fn silu(&self) -> Result<Var<T>> {
        unary("silu", self, |x| x * sigmoid(x), |x, _| {
            let s = sigmoid(x);
            s * (T::one() + x * (T::one() - s))
        })
    }

    pub fn gelu(&self) -> Result<Var<T>> {
        unary("gelu", self, gelu, |x, _| gelu_grad(x))
    }

    pub fn softplus(&self) -> Result<Var<T>> {
        unary("softplus", self, softplus, |x, _| sigmoid(x))
    }

    pub fn sigmoid(&self) -> Result<Var<T>> {
        unary("sigmoid", self, sigmoid, |_, y| y * (T::one() - y))
    }
}

/// Element-wise product of two untracked tensors.
pub fn mul_tensors<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary("mul", a, b, |x, y| x * y)
}
