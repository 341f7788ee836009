//! Region masks for shifted-window attention.

use mixerbench_tensor::{Element, Tensor};

use crate::{Error, Result};

/// Additive attention bias for every window of a cyclically shifted grid.
///
/// Windows are enumerated in raster order over the window grid and tokens
/// within a window in raster order, matching [`crate::backbones::window_partition`].
#[derive(Debug, Clone)]
pub struct ShiftMask {
    grid: Vec<usize>,
    window: usize,
    shift: usize,
    /// Region label of every grid token, raster order.
    labels: Vec<usize>,
}

impl ShiftMask {
    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_regions(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }

    pub fn num_windows(&self) -> usize {
        self.grid.iter().map(|e| e / self.window).product()
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window.pow(self.grid.len() as u32)
    }

    /// Region labels of the tokens in window `w`, in window order.
    pub fn window_labels(&self, w: usize) -> Vec<usize> {
        let rank = self.grid.len();
        let wgrid: Vec<usize> = self.grid.iter().map(|e| e / self.window).collect();
        let wcoord = unravel(w, &wgrid);
        let inner = vec![self.window; rank];
        (0..self.tokens_per_window())
            .map(|p| {
                let pcoord = unravel(p, &inner);
                let g: Vec<usize> = (0..rank).map(|a| wcoord[a] * self.window + pcoord[a]).collect();
                self.labels[ravel(&g, &self.grid)]
            })
            .collect()
    }

    /// Bias of shape `[windows, w^r, w^r]`: zero within a region, the
    /// element type's mask sentinel across regions.
    pub fn bias<T: Element>(&self) -> Result<Tensor<T>> {
        let nw = self.num_windows();
        let m = self.tokens_per_window();
        let mut data = Vec::with_capacity(nw * m * m);
        for w in 0..nw {
            let l = self.window_labels(w);
            for i in 0..m {
                for j in 0..m {
                    data.push(if l[i] == l[j] { T::zero() } else { T::mask_sentinel() });
                }
            }
        }
        Ok(Tensor::from_vec([nw, m, m], data)?)
    }
}

/// Labels every token of a grid that has been rolled back by `shift` along
/// each axis with the pre-shift region it came from.
pub fn build_shift_mask(grid: &[usize], window: usize, shift: usize) -> Result<ShiftMask> {
    if window == 0 || shift >= window {
        return Err(Error::invalid(
            "build_shift_mask",
            format!("shift {shift} must be smaller than window {window}"),
        ));
    }
    if grid.is_empty() || grid.iter().any(|&e| e == 0 || e % window != 0) {
        return Err(Error::invalid(
            "build_shift_mask",
            format!("grid {grid:?} is not divisible by window {window}"),
        ));
    }
    let total: usize = grid.iter().product();
    let labels = if shift == 0 {
        vec![0; total]
    } else {
        (0..total)
            .map(|i| {
                let c = unravel(i, grid);
                c.iter().zip(grid).fold(0, |acc, (&x, &e)| {
                    let r = if x < e - window {
                        0
                    } else if x < e - shift {
                        1
                    } else {
                        2
                    };
                    acc * 3 + r
                })
            })
            .collect()
    };
    Ok(ShiftMask {
        grid: grid.to_vec(),
        window,
        shift,
        labels,
    })
}

pub(crate) fn unravel(mut i: usize, extents: &[usize]) -> Vec<usize> {
    let mut c = vec![0; extents.len()];
    for a in (0..extents.len()).rev() {
        c[a] = i % extents[a];
        i /= extents[a];
    }
    c
}

pub(crate) fn ravel(c: &[usize], extents: &[usize]) -> usize {
    c.iter().zip(extents).fold(0, |acc, (&x, &e)| acc * e + x)
}
