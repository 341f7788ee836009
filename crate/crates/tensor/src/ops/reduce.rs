use crate::alloc;
use crate::kernels;
use crate::tape::record;
use crate::{Element, Error, Result, Tensor, Var};

impl<T: Element> Var<T> {
    /// Sum of all elements as a scalar.
    pub fn sum(&self) -> Result<Var<T>> {
        let out = Tensor::scalar(self.value().sum_all());
        let shape = self.shape().to_vec();
        record("reduce_sum", &[self], out, move |g| {
            Ok(vec![Some(Tensor::full(shape, g.item()?)?)])
        })
    }

    pub fn mean(&self) -> Result<Var<T>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::invalid("reduce_mean", "empty tensor"));
        }
        self.sum()?.mul_scalar(1.0 / n as f64)
    }

    /// Sum along `axis`, keeping it with extent 1 when `keepdim`.
    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid("reduce_sum", format!("axis {axis} of {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = alloc::zeroed::<T>(outer * inner)?;
        let x = self.value().data();
        for o in 0..outer {
            for a in 0..len {
                let src = &x[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        let mut kept = shape.clone();
        kept[axis] = 1;
        let out_shape = if keepdim {
            kept.clone()
        } else {
            let mut s = shape.clone();
            s.remove(axis);
            s
        };
        let out = Tensor::from_vec(out_shape, out)?;
        record("reduce_sum", &[self], out, move |g| {
            let g = g.reshape(kept)?;
            Ok(vec![Some(kernels::broadcast_to(&g, &shape)?)])
        })
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Var<T>> {
        let len = *self
            .shape()
            .get(axis)
            .ok_or_else(|| Error::invalid("reduce_mean", format!("axis {axis} of {:?}", self.shape())))?;
        if len == 0 {
            return Err(Error::invalid("reduce_mean", "empty axis"));
        }
        self.sum_axis(axis, keepdim)?.mul_scalar(1.0 / len as f64)
    }
}
