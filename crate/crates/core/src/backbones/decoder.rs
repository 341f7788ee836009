//! Lightweight dense-prediction heads.

use mixerbench_tensor::{Element, Var};

use super::grid::{channels_first, channels_last, depth_to_space, upsample_nearest};
use crate::params::{Bound, Builder, Linear};
use crate::Result;

/// Narrowest channel width of the upsampling path.
pub const MIN_WIDTH: usize = 8;

/// Repeated `GELU(Linear)` + 2x depth-to-space steps back to pixel
/// resolution (a transposed convolution with kernel = stride = 2).
#[derive(Debug, Clone)]
pub struct UpPath {
    pub rank: usize,
    pub steps: Vec<Linear>,
}

impl UpPath {
    pub fn new<T: Element>(b: &mut Builder<'_, T>, rank: usize, width: usize, factor: usize) -> Result<Self> {
        let mut steps = Vec::new();
        let (mut c, mut f) = (width, factor);
        while f > 1 {
            let next = (c / 2).max(MIN_WIDTH);
            steps.push(b.linear(&format!("up.{}", steps.len()), c, next << rank, true)?);
            c = next;
            f /= 2;
        }
        Ok(UpPath { rank, steps })
    }

    pub fn out_width(&self, width: usize) -> usize {
        self.steps.last().map_or(width, |l| l.dout >> self.rank)
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let mut x = x.clone();
        for l in &self.steps {
            x = depth_to_space(&l.forward(p, &x)?.gelu()?, 2)?;
        }
        Ok(x)
    }
}

/// Final per-pixel projection of `[upsampled features, raw image]`.
fn pixel_out<T: Element>(p: &Bound<T>, out: &Linear, x: &Var<T>, image: &Var<T>) -> Result<Var<T>> {
    let cat = Var::concat(&[x.clone(), channels_last(image)?], image.rank() - 1)?;
    channels_first(&out.forward(p, &cat)?)
}

/// Fuses three ViT token grids and upsamples by the patch size.
#[derive(Debug, Clone)]
pub struct VitDecoder {
    pub fuse: Linear,
    pub up: UpPath,
    pub out: Linear,
}

impl VitDecoder {
    pub fn new<T: Element>(
        b: &mut Builder<'_, T>,
        rank: usize,
        dim: usize,
        patch: usize,
        channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let fuse = b.linear("fuse", 3 * dim, dim, true)?;
        let up = UpPath::new(b, rank, dim, patch)?;
        let out = b.linear("out", up.out_width(dim) + channels, out_channels, true)?;
        Ok(VitDecoder { fuse, up, out })
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, levels: &[Var<T>], image: &Var<T>) -> Result<Var<T>> {
        let axis = levels[0].rank() - 1;
        let x = self.fuse.forward(p, &Var::concat(levels, axis)?)?.gelu()?;
        pixel_out(p, &self.out, &self.up.forward(p, &x)?, image)
    }
}

/// Per-stage projection to a common width, nearest upsampling to the
/// finest stage, summation and one fusion layer.
#[derive(Debug, Clone)]
pub struct SwinDecoder {
    pub lateral: Vec<Linear>,
    pub fuse: Linear,
    pub up: UpPath,
    pub out: Linear,
}

impl SwinDecoder {
    pub fn new<T: Element>(
        b: &mut Builder<'_, T>,
        rank: usize,
        stage_dims: &[usize],
        patch: usize,
        channels: usize,
        out_channels: usize,
    ) -> Result<Self> {
        let width = stage_dims[0];
        let lateral = stage_dims
            .iter()
            .enumerate()
            .map(|(i, &d)| b.linear(&format!("lateral.{i}"), d, width, true))
            .collect::<Result<Vec<_>>>()?;
        let fuse = b.linear("fuse", width, width, true)?;
        let up = UpPath::new(b, rank, width, patch)?;
        let out = b.linear("out", up.out_width(width) + channels, out_channels, true)?;
        Ok(SwinDecoder { lateral, fuse, up, out })
    }

    pub fn forward<T: Element>(&self, p: &Bound<T>, levels: &[Var<T>], image: &Var<T>) -> Result<Var<T>> {
        let base: Vec<usize> = levels[0].shape()[..levels[0].rank() - 1].to_vec();
        let mut acc: Option<Var<T>> = None;
        for (i, (lvl, lat)) in levels.iter().zip(&self.lateral).enumerate() {
            let y = upsample_nearest(&lat.forward(p, lvl)?, 1 << i)?;
            // merged stages round odd grids up; crop back to the finest grid
            let y = super::grid::crop(&y, &base)?;
            acc = Some(match acc {
                None => y,
                Some(a) => a.add(&y)?,
            });
        }
        let x = self.fuse.forward(p, &acc.expect("at least one stage"))?.gelu()?;
        pixel_out(p, &self.out, &self.up.forward(p, &x)?, image)
    }
}
