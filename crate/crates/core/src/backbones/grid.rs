//! Re-arrangements between images, token grids and windows.
//!
//! Images are `[C, E1, .., Er]`; token grids are channels-last
//! `[G1, .., Gr, C]` in raster order (last spatial axis fastest).

use mixerbench_tensor::{Element, Var};

use crate::{Error, Result};

/// Interleaves `outer[i]` and `inner` factors: `[o1, f, o2, f, ..]`.
fn interleaved(outer: &[usize], inner: usize) -> Vec<usize> {
    outer.iter().flat_map(|&o| [o, inner]).collect()
}

/// `[C, E..]` to `[n, C * p^r]`; each row is one patch flattened as
/// `(channel, offsets..)`.
pub fn patchify<T: Element>(image: &Var<T>, patch: usize) -> Result<Var<T>> {
    let shape = image.shape().to_vec();
    if shape.len() < 2 || patch == 0 {
        return Err(Error::invalid("patch_embed", format!("image shape {shape:?}")));
    }
    let (c, ext) = (shape[0], &shape[1..]);
    if ext.iter().any(|&e| e % patch != 0 || e == 0) {
        return Err(Error::invalid(
            "patch_embed",
            format!("extents {ext:?} are not divisible by patch size {patch}"),
        ));
    }
    let r = ext.len();
    let grid: Vec<usize> = ext.iter().map(|e| e / patch).collect();
    let mut split = vec![c];
    split.extend(interleaved(&grid, patch));
    // [C, G1, p, G2, p, ..] -> [G1, G2, .., C, p, p, ..]
    let mut axes: Vec<usize> = (0..r).map(|i| 1 + 2 * i).collect();
    axes.push(0);
    axes.extend((0..r).map(|i| 2 + 2 * i));
    let n: usize = grid.iter().product();
    Ok(image.reshape(split)?.permute(&axes)?.reshape([n, c * patch.pow(r as u32)])?)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Element>(tokens: &Var<T>, grid: &[usize], channels: usize, patch: usize) -> Result<Var<T>> {
    let r = grid.len();
    let n: usize = grid.iter().product();
    if tokens.shape() != [n, channels * patch.pow(r as u32)] {
        return Err(Error::invalid("unpatchify", format!("tokens {:?} for grid {grid:?}", tokens.shape())));
    }
    let mut split = grid.to_vec();
    split.push(channels);
    split.extend(std::iter::repeat_n(patch, r));
    // [G1, .., C, p, ..] -> [C, G1, p, G2, p, ..]
    let mut axes = vec![r];
    for i in 0..r {
        axes.push(i);
        axes.push(r + 1 + i);
    }
    let ext: Vec<usize> = std::iter::once(channels).chain(grid.iter().map(|g| g * patch)).collect();
    Ok(tokens.reshape(split)?.permute(&axes)?.reshape(ext)?)
}

fn grid_dims<T: Element>(x: &Var<T>, op: &'static str) -> Result<(Vec<usize>, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::invalid(op, format!("expected a [G.., C] grid, got {s:?}")));
    }
    Ok((s[..s.len() - 1].to_vec(), s[s.len() - 1]))
}

/// Zero-pads every spatial axis of a grid up to a multiple of `m`.
pub fn pad_to_multiple<T: Element>(x: &Var<T>, m: usize) -> Result<Var<T>> {
    let (grid, _) = grid_dims(x, "pad_grid")?;
    let mut y = x.clone();
    for (a, &g) in grid.iter().enumerate() {
        let extra = (m - g % m) % m;
        if extra > 0 {
            y = y.pad(a, 0, extra)?;
        }
    }
    Ok(y)
}

/// Crops a grid back to `grid` extents.
pub fn crop<T: Element>(x: &Var<T>, grid: &[usize]) -> Result<Var<T>> {
    let mut y = x.clone();
    for (a, &g) in grid.iter().enumerate() {
        if y.shape()[a] != g {
            y = y.slice(a, 0, g)?;
        }
    }
    Ok(y)
}

/// `[G.., C]` to `[windows, w^r, C]`, padding the grid up to multiples of
/// `window` first. Returns the padded extents.
pub fn window_partition<T: Element>(x: &Var<T>, window: usize) -> Result<(Var<T>, Vec<usize>)> {
    if window == 0 {
        return Err(Error::invalid("window_partition", "window size must be positive"));
    }
    let x = pad_to_multiple(x, window)?;
    let (grid, c) = grid_dims(&x, "window_partition")?;
    let r = grid.len();
    let wgrid: Vec<usize> = grid.iter().map(|g| g / window).collect();
    let mut split = interleaved(&wgrid, window);
    split.push(c);
    let mut axes: Vec<usize> = (0..r).map(|i| 2 * i).collect();
    axes.extend((0..r).map(|i| 2 * i + 1));
    axes.push(2 * r);
    let nw: usize = wgrid.iter().product();
    let y = x.reshape(split)?.permute(&axes)?.reshape([nw, window.pow(r as u32), c])?;
    Ok((y, grid))
}

/// Inverse of [`window_partition`]: reassembles the padded grid and crops
/// it to `grid`.
pub fn window_reverse<T: Element>(windows: &Var<T>, padded: &[usize], grid: &[usize], window: usize) -> Result<Var<T>> {
    let r = padded.len();
    let c = *windows.shape().last().unwrap_or(&0);
    let wgrid: Vec<usize> = padded.iter().map(|g| g / window).collect();
    let mut split = wgrid.clone();
    split.extend(std::iter::repeat_n(window, r));
    split.push(c);
    let mut axes = Vec::with_capacity(2 * r + 1);
    for i in 0..r {
        axes.push(i);
        axes.push(r + i);
    }
    axes.push(2 * r);
    let mut full = padded.to_vec();
    full.push(c);
    let y = windows.reshape(split)?.permute(&axes)?.reshape(full)?;
    crop(&y, grid)
}

/// Rolls every spatial axis by `-shift` (tokens move toward the origin).
pub fn cyclic_shift<T: Element>(x: &Var<T>, shift: usize) -> Result<Var<T>> {
    roll_all(x, -(shift as isize))
}

pub fn inverse_cyclic_shift<T: Element>(x: &Var<T>, shift: usize) -> Result<Var<T>> {
    roll_all(x, shift as isize)
}

fn roll_all<T: Element>(x: &Var<T>, shift: isize) -> Result<Var<T>> {
    let (grid, _) = grid_dims(x, "cyclic_shift")?;
    let mut y = x.clone();
    if shift != 0 {
        for a in 0..grid.len() {
            y = y.roll(a, shift)?;
        }
    }
    Ok(y)
}

/// Merges `f^r` neighbouring tokens into the channel axis:
/// `[G.., C]` to `[G/f.., f^r * C]`.
pub fn space_to_depth<T: Element>(x: &Var<T>, f: usize) -> Result<Var<T>> {
    let (grid, c) = grid_dims(x, "space_to_depth")?;
    if grid.iter().any(|g| g % f != 0) {
        return Err(Error::invalid("space_to_depth", format!("grid {grid:?} not divisible by {f}")));
    }
    let r = grid.len();
    let outer: Vec<usize> = grid.iter().map(|g| g / f).collect();
    let mut split = interleaved(&outer, f);
    split.push(c);
    let mut axes: Vec<usize> = (0..r).map(|i| 2 * i).collect();
    axes.extend((0..r).map(|i| 2 * i + 1));
    axes.push(2 * r);
    let mut out = outer;
    out.push(f.pow(r as u32) * c);
    Ok(x.reshape(split)?.permute(&axes)?.reshape(out)?)
}

/// Inverse of [`space_to_depth`]: `[G.., f^r * C]` to `[f G.., C]`.
pub fn depth_to_space<T: Element>(x: &Var<T>, f: usize) -> Result<Var<T>> {
    let (grid, cf) = grid_dims(x, "depth_to_space")?;
    let r = grid.len();
    let block = f.pow(r as u32);
    if cf % block != 0 {
        return Err(Error::invalid("depth_to_space", format!("{cf} channels not divisible by {block}")));
    }
    let c = cf / block;
    let mut split = grid.clone();
    split.extend(std::iter::repeat_n(f, r));
    split.push(c);
    let mut axes = Vec::with_capacity(2 * r + 1);
    for i in 0..r {
        axes.push(i);
        axes.push(r + i);
    }
    axes.push(2 * r);
    let mut out: Vec<usize> = grid.iter().map(|g| g * f).collect();
    out.push(c);
    Ok(x.reshape(split)?.permute(&axes)?.reshape(out)?)
}

/// Nearest-neighbour upsampling of a grid by an integer factor.
pub fn upsample_nearest<T: Element>(x: &Var<T>, f: usize) -> Result<Var<T>> {
    if f == 1 {
        return Ok(x.clone());
    }
    let (grid, c) = grid_dims(x, "upsample")?;
    let mut split: Vec<usize> = grid.iter().flat_map(|&g| [g, 1]).collect();
    split.push(c);
    let mut target: Vec<usize> = grid.iter().flat_map(|&g| [g, f]).collect();
    target.push(c);
    let mut out: Vec<usize> = grid.iter().map(|g| g * f).collect();
    out.push(c);
    Ok(x.reshape(split)?.broadcast_to(&target)?.reshape(out)?)
}

/// `[C, E..]` image to channels-last `[E.., C]`.
pub fn channels_last<T: Element>(image: &Var<T>) -> Result<Var<T>> {
    let r = image.rank();
    let axes: Vec<usize> = (1..r).chain(std::iter::once(0)).collect();
    Ok(image.permute(&axes)?)
}

/// Channels-last `[E.., C]` to `[C, E..]`.
pub fn channels_first<T: Element>(x: &Var<T>) -> Result<Var<T>> {
    let r = x.rank();
    let axes: Vec<usize> = std::iter::once(r - 1).chain(0..r - 1).collect();
    Ok(x.permute(&axes)?)
}
