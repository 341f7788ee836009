//! Isotropic vision transformer over a single token grid.

use mixerbench_tensor::{Element, Var};

use super::block::Block;
use super::config::{ModelConfig, PosEmbed};
use super::grid::patchify;
use crate::params::{Bound, Builder, LayerNorm, Linear, ParamId};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Vit {
    pub dim: usize,
    pub patch: usize,
    pub channels: usize,
    pub grid: Vec<usize>,
    pub embed: Linear,
    pub pos: Option<ParamId>,
    pub blocks: Vec<Block>,
    /// Final norm; absent for an empty stack.
    pub norm: Option<LayerNorm>,
}

/// Token grids `[G.., d]` after `depth/3` blocks, `2 depth/3` blocks and the
/// final norm.
pub struct VitFeatures<T: Element> {
    pub levels: [Var<T>; 3],
}

impl Vit {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, cfg: &ModelConfig, channels: usize, extents: &[usize]) -> Result<Self> {
        let patch = cfg.patch_size;
        if extents.len() != cfg.spatial_rank || extents.iter().any(|&e| e == 0 || e % patch != 0) {
            return Err(Error::config(format!(
                "image extents {extents:?} must be rank {} and divisible by patch size {patch}",
                cfg.spatial_rank
            )));
        }
        let grid: Vec<usize> = extents.iter().map(|e| e / patch).collect();
        let n: usize = grid.iter().product();
        let d = cfg.embed_dim;
        let mut e = b.scope("embed");
        let embed = e.linear("proj", channels * patch.pow(cfg.spatial_rank as u32), d, true)?;
        let pos = match cfg.pos_embed {
            PosEmbed::Learned => Some(e.uniform("pos", &[n, d], 0.02)?),
            PosEmbed::None => None,
        };
        let depth = cfg.depth[0];
        let mut blocks = Vec::with_capacity(depth);
        for i in 0..depth {
            blocks.push(Block::new(&mut b.scope(&format!("blocks.{i}")), cfg.mixer, d, cfg.num_heads)?);
        }
        let norm = if depth > 0 { Some(b.layer_norm("norm", d)?) } else { None };
        Ok(Vit {
            dim: d,
            patch,
            channels,
            grid,
            embed,
            pos,
            blocks,
            norm,
        })
    }

    pub fn tokens(&self) -> usize {
        self.grid.iter().product()
    }

    /// Patch embedding plus position embedding, `[n, d]`.
    pub fn embed<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<Var<T>> {
        let x = self.embed.forward(p, &patchify(image, self.patch)?)?;
        Ok(match self.pos {
            Some(pos) => x.add(p.var(pos))?,
            None => x,
        })
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<VitFeatures<T>> {
        let n = self.tokens();
        let d = self.dim;
        let mut grid_shape = self.grid.clone();
        grid_shape.push(d);
        let depth = self.blocks.len();
        let marks = [depth / 3, 2 * depth / 3];
        let mut x = self.embed(p, image)?.reshape([1, n, d])?;
        let mut saved = Vec::with_capacity(2);
        for i in 0..=depth {
            while saved.len() < 2 && marks[saved.len()] == i {
                saved.push(x.reshape(grid_shape.clone())?);
            }
            if i < depth {
                x = self.blocks[i].forward_seq(p, &x, None)?;
            }
        }
        let last = match &self.norm {
            Some(norm) => norm.forward(p, &x)?,
            None => x,
        };
        let last = last.reshape(grid_shape)?;
        let [a, b]: [Var<T>; 2] = saved.try_into().map_err(|_| Error::invalid("vit_forward", "skip levels"))?;
        Ok(VitFeatures { levels: [a, b, last] })
    }
}
