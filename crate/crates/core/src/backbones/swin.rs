//! Hierarchical windowed transformer with patch merging between stages.

use mixerbench_tensor::{Element, Var};

use super::block::Block;
use super::config::{ModelConfig, SWIN_STAGES};
use super::grid::{pad_to_multiple, patchify, space_to_depth};
use crate::params::{Bound, Builder, LayerNorm, Linear};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Stage {
    pub dim: usize,
    pub grid: Vec<usize>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy)]
pub struct Merge {
    pub norm: LayerNorm,
    pub reduce: Linear,
}

#[derive(Debug, Clone)]
pub struct Swin {
    pub patch: usize,
    pub window: usize,
    pub shift_enabled: bool,
    pub channels: usize,
    pub embed: Linear,
    pub embed_norm: LayerNorm,
    pub stages: Vec<Stage>,
    pub merges: Vec<Merge>,
}

impl Swin {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, cfg: &ModelConfig, channels: usize, extents: &[usize]) -> Result<Self> {
        let (patch, window, r) = (cfg.patch_size, cfg.window_size, cfg.spatial_rank);
        if extents.len() != r || extents.iter().any(|&e| e == 0 || e % patch != 0) {
            return Err(Error::config(format!(
                "image extents {extents:?} must be rank {r} and divisible by patch size {patch}"
            )));
        }
        let mut grid: Vec<usize> = extents.iter().map(|e| e / patch).collect();
        let d = cfg.embed_dim;
        let mut e = b.scope("embed");
        let embed = e.linear("proj", channels * patch.pow(r as u32), d, true)?;
        let embed_norm = e.layer_norm("norm", d)?;
        let mut stages = Vec::with_capacity(SWIN_STAGES);
        let mut merges = Vec::with_capacity(SWIN_STAGES - 1);
        for (i, &depth) in cfg.depth.iter().enumerate() {
            if grid.iter().any(|&g| g < window) {
                return Err(Error::config(format!(
                    "swin stage {i} token grid {grid:?} is smaller than window {window} (image {extents:?}, patch {patch})"
                )));
            }
            let dim = d << i;
            let heads = cfg.num_heads << i;
            let mut s = b.scope(&format!("stages.{i}"));
            let blocks = (0..depth)
                .map(|j| Block::new(&mut s.scope(&format!("blocks.{j}")), cfg.mixer, dim, heads))
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage {
                dim,
                grid: grid.clone(),
                blocks,
            });
            if i + 1 < cfg.depth.len() {
                let mut m = b.scope(&format!("merges.{i}"));
                let merged = (1 << r) * dim;
                merges.push(Merge {
                    norm: m.layer_norm("norm", merged)?,
                    reduce: m.linear("reduce", merged, 2 * dim, false)?,
                });
                grid = grid.iter().map(|g| g.div_ceil(2)).collect();
            }
        }
        Ok(Swin {
            patch,
            window,
            shift_enabled: cfg.shift_enabled,
            channels,
            embed,
            embed_norm,
            stages,
            merges,
        })
    }

    /// Shift used by block `j` of a stage: unshifted on even blocks, half a
    /// window on odd blocks when shifting is enabled.
    pub fn shift_for(&self, block: usize) -> Option<usize> {
        (self.shift_enabled && block % 2 == 1).then_some(self.window / 2)
    }

    /// Stage outputs, each a `[G_i.., d 2^i]` grid.
    pub fn forward<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<Vec<Var<T>>> {
        let mut shape = self.stages[0].grid.clone();
        shape.push(self.stages[0].dim);
        let tokens = self.embed.forward(p, &patchify(image, self.patch)?)?;
        let mut x = self.embed_norm.forward(p, &tokens)?.reshape(shape)?;
        let mut outputs = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            for (j, block) in stage.blocks.iter().enumerate() {
                x = block.forward_windowed(p, &x, self.window, self.shift_for(j))?;
            }
            outputs.push(x.clone());
            if let Some(m) = self.merges.get(i) {
                let merged = space_to_depth(&pad_to_multiple(&x, 2)?, 2)?;
                x = m.reduce.forward(p, &m.norm.forward(p, &merged)?)?;
            }
        }
        Ok(outputs)
    }
}
