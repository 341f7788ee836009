//! Named parameter storage and the layers built on it.

use mixerbench_tensor::{Element, Gradients, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered, named parameter tensors.
#[derive(Clone, Default)]
pub struct Params<T: Element> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Element> Params<T> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        self.values[id.0] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total element count of parameters whose name starts with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Snapshot of all values (buffers are shared, not copied).
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.values.clone()
    }

    pub fn restore(&mut self, values: Vec<Tensor<T>>) {
        assert_eq!(values.len(), self.values.len(), "snapshot arity");
        self.values = values;
    }

    /// Views every parameter as a variable: tracked leaves when a tape is
    /// given, constants otherwise.
    pub fn bind(&self, tape: Option<&Tape<T>>) -> Bound<T> {
        let vars = self
            .values
            .iter()
            .map(|v| match tape {
                Some(t) => t.leaf(v.clone()),
                None => Var::constant(v.clone()),
            })
            .collect();
        Bound { vars }
    }
}

impl<T: Element> std::fmt::Debug for Params<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.iter().map(|(n, t)| (n, t.shape()))).finish()
    }
}

/// Parameters bound for one forward pass.
pub struct Bound<T: Element> {
    vars: Vec<Var<T>>,
}

impl<T: Element> Bound<T> {
    /// Wraps externally created variables, one per parameter in order.
    pub fn from_vars(vars: Vec<Var<T>>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> &Var<T> {
        &self.vars[id.0]
    }

    /// Gradients aligned with parameter order.
    pub fn grads(&self, g: &Gradients<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.vars.iter().map(|v| g.wrt(v)).collect::<mixerbench_tensor::Result<_>>()?)
    }
}

/// Registers named parameters under a dotted prefix.
pub struct Builder<'a, T: Element> {
    params: &'a mut Params<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Element> Builder<'a, T> {
    pub fn new(params: &'a mut Params<T>, rng: &'a mut ChaCha8Rng) -> Self {
        Builder {
            params,
            rng,
            prefix: String::new(),
        }
    }

    pub fn scope(&mut self, name: &str) -> Builder<'_, T> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            params: self.params,
            rng: self.rng,
            prefix,
        }
    }

    fn name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        let n = self.name(name);
        self.params.add(n, value)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let t = Tensor::uniform(shape.to_vec(), -bound, bound, self.rng)?;
        Ok(self.tensor(name, t))
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        Ok(self.tensor(name, Tensor::zeros(shape.to_vec())?))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        Ok(self.tensor(name, Tensor::ones(shape.to_vec())?))
    }

    pub fn linear(&mut self, name: &str, din: usize, dout: usize, bias: bool) -> Result<Linear> {
        let mut s = self.scope(name);
        // Xavier-uniform weights
        let bound = (6.0 / (din + dout) as f64).sqrt();
        let w = s.uniform("weight", &[din, dout], bound)?;
        let b = if bias { Some(s.zeros("bias", &[dout])?) } else { None };
        Ok(Linear { w, b, din, dout })
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        let mut s = self.scope(name);
        Ok(LayerNorm {
            gamma: s.ones("weight", &[dim])?,
            beta: s.zeros("bias", &[dim])?,
        })
    }

    pub fn random_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// `y = x W + b` over the last axis, with `W` stored `[din, dout]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let y = x.matmul(p.var(self.w))?;
        Ok(match self.b {
            Some(b) => y.add(p.var(b))?,
            None => y,
        })
    }

    pub fn flops(&self, rows: usize) -> u64 {
        2 * (rows * self.din * self.dout) as u64
    }

    pub fn param_count(&self) -> usize {
        self.din * self.dout + if self.b.is_some() { self.dout } else { 0 }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        Ok(x.layer_norm(p.var(self.gamma), p.var(self.beta), LAYER_NORM_EPS)?)
    }
}
