//! Pre-norm transformer block with a pluggable token mixer.

use mixerbench_tensor::{Element, Tensor, Var};

use super::grid::{crop, cyclic_shift, inverse_cyclic_shift, pad_to_multiple, window_partition, window_reverse};
use crate::mixers::{build_shift_mask, Mixer, MixerKind};
use crate::params::{Bound, Builder, LayerNorm, Linear};
use crate::{Error, Result};

pub const MLP_RATIO: usize = 4;

#[derive(Debug, Clone)]
pub struct Block {
    pub dim: usize,
    pub norm1: LayerNorm,
    pub mixer: Mixer,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Block {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, kind: MixerKind, dim: usize, heads: usize) -> Result<Self> {
        let norm1 = b.layer_norm("norm1", dim)?;
        let mixer = Mixer::new(&mut b.scope("mixer"), kind, dim, heads)?;
        let norm2 = b.layer_norm("norm2", dim)?;
        let mut mlp = b.scope("mlp");
        let fc1 = mlp.linear("fc1", dim, MLP_RATIO * dim, true)?;
        let fc2 = mlp.linear("fc2", MLP_RATIO * dim, dim, true)?;
        Ok(Block {
            dim,
            norm1,
            mixer,
            norm2,
            fc1,
            fc2,
        })
    }

    fn mlp<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let h = self.norm2.forward(p, x)?;
        let h = self.fc2.forward(p, &self.fc1.forward(p, &h)?.gelu()?)?;
        Ok(x.add(&h)?)
    }

    /// `x` is `[batch, n, d]`.
    pub fn forward_seq<T: Element>(&self, p: &Bound<T>, x: &Var<T>, mask: Option<&Tensor<T>>) -> Result<Var<T>> {
        let h = self.mixer.forward(p, &self.norm1.forward(p, x)?, mask)?;
        self.mlp(p, &x.add(&h)?)
    }

    /// Applies the mixer independently inside each `window^r` window of a
    /// `[G.., d]` grid. `shift` of `None` bypasses shifting altogether;
    /// `Some(s)` rolls the grid by `s`, masks cross-region pairs (attention
    /// only) and rolls back.
    pub fn forward_windowed<T: Element>(
        &self,
        p: &Bound<T>,
        x: &Var<T>,
        window: usize,
        shift: Option<usize>,
    ) -> Result<Var<T>> {
        let grid = x.shape()[..x.rank() - 1].to_vec();
        let h = pad_to_multiple(&self.norm1.forward(p, x)?, window)?;
        let padded = h.shape()[..h.rank() - 1].to_vec();
        let (h, mask) = match shift {
            None => (h, None),
            Some(s) => {
                let mask = match self.mixer.kind() {
                    MixerKind::Attention => Some(build_shift_mask(&padded, window, s)?.bias::<T>()?),
                    k if s > 0 => {
                        return Err(Error::config(format!("shifted windows are only used with attention, not {k}")))
                    }
                    _ => None,
                };
                (cyclic_shift(&h, s)?, mask)
            }
        };
        let (windows, _) = window_partition(&h, window)?;
        let windows = self.mixer.forward(p, &windows, mask.as_ref())?;
        let mut h = window_reverse(&windows, &padded, &padded, window)?;
        if let Some(s) = shift {
            h = inverse_cyclic_shift(&h, s)?;
        }
        let h = crop(&h, &grid)?;
        self.mlp(p, &x.add(&h)?)
    }
}
