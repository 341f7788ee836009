use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::alloc::{self, AllocCounter};
use crate::{DType, Element, Error, Result};

struct Buffer<T> {
    data: Vec<T>,
    counter: Arc<AllocCounter>,
}

impl<T> Buffer<T> {
    fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

impl<T> Drop for Buffer<T> {
    fn drop(&mut self) {
        self.counter.release(self.bytes());
    }
}

/// Immutable dense array in row-major order.
///
/// Cloning is cheap; the buffer is shared. Reshapes share the buffer,
/// every other layout change copies.
#[derive(Clone)]
pub struct Tensor<T: Element> {
    shape: Vec<usize>,
    buf: Arc<Buffer<T>>,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {shape:?} needs {} values, got {}", numel(&shape), data.len()),
            ));
        }
        let counter = alloc::active();
        let bytes = data.len() * std::mem::size_of::<T>();
        counter.acquire(bytes);
        Ok(Tensor {
            shape,
            buf: Arc::new(Buffer { data, counter }),
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let data = alloc::zeroed(numel(&shape))?;
        Self::from_vec(shape, data)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        alloc::check_reserve(numel(&shape) * std::mem::size_of::<T>())?;
        let n = numel(&shape);
        Self::from_vec(shape, vec![value; n])
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(Vec::<usize>::new(), vec![value]).expect("scalar shape")
    }

    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&x| T::c(x)).collect())
    }

    /// Identity matrix of size `n`.
    pub fn eye(n: usize) -> Result<Self> {
        let mut data = alloc::zeroed(n * n)?;
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self::from_vec([n, n], data)
    }

    pub fn randn<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, std: f64, rng: &mut R) -> Result<Self> {
        let shape = shape.into();
        let data = (0..numel(&shape))
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::c(z * std)
            })
            .collect();
        Self::from_vec(shape, data)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let shape = shape.into();
        let data = (0..numel(&shape))
            .map(|_| T::c(rng.random_range(lo..hi)))
            .collect();
        Self::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.buf.data.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn bytes(&self) -> usize {
        self.buf.bytes()
    }

    pub fn data(&self) -> &[T] {
        &self.buf.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.buf.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.buf.data.iter().map(|x| x.f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::shape("item", format!("expected one element, got {:?}", self.shape)));
        }
        Ok(self.buf.data[0])
    }

    pub fn at(&self, index: &[usize]) -> T {
        let st = strides(&self.shape);
        let off: usize = index.iter().zip(&st).map(|(i, s)| i * s).sum();
        self.buf.data[off]
    }

    /// Same buffer, new shape.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape, shape),
            ));
        }
        Ok(Tensor {
            shape,
            buf: self.buf.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.buf.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::from_vec(self.shape.clone(), self.buf.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self
            .buf
            .data
            .iter()
            .zip(&other.buf.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec(self.shape.clone(), data)
    }

    pub fn sum_all(&self) -> T {
        self.buf.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.buf
            .data
            .iter()
            .zip(&other.buf.data)
            .map(|(a, b)| (*a - *b).abs().f64())
            .fold(0.0, f64::max)
    }

    /// Converts to another element type.
    pub fn cast<U: Element>(&self) -> Result<Tensor<U>> {
        Tensor::from_vec(
            self.shape.clone(),
            self.buf.data.iter().map(|x| U::c(x.f64())).collect(),
        )
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        write!(f, "Tensor<{}>{:?}", T::DTYPE.name(), self.shape)?;
        if data.len() <= 16 {
            write!(f, " {:?}", data)
        } else {
            write!(f, " [{:?}, {:?}, ... {} values]", data[0], data[1], data.len())
        }
    }
}

impl<T: Element> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data() == other.data()
    }
}

