//! Token mixers mapping `[batch, n, d]` to `[batch, n, d]`.

mod attention;
mod hyena;
mod mamba;
mod mask;
mod scan;

use std::fmt;
use std::str::FromStr;

use mixerbench_tensor::{Element, Tensor, Var};

pub use attention::{attention_flops, Attention};
pub use hyena::{hyena_flops, positional_features, Hyena, DEFAULT_ORDER, FILTER_FREQS, FILTER_HIDDEN};
pub use mamba::{mamba_flops, Branch, MambaVision, CONV_KERNEL, DEFAULT_STATE};
pub use mask::{build_shift_mask, ShiftMask};
#[allow(unused_imports)]
pub(crate) use mask::{ravel, unravel};
pub use scan::{scan_flops, selective_scan, selective_scan_chunked, selective_scan_sequential, SCAN_FLOPS_PER_STATE};

use crate::params::{Bound, Builder};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MixerKind {
    Attention,
    Hyena,
    MambaVision,
}

impl MixerKind {
    pub const ALL: [MixerKind; 3] = [MixerKind::Attention, MixerKind::Hyena, MixerKind::MambaVision];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Attention => "attention",
            MixerKind::Hyena => "hyena",
            MixerKind::MambaVision => "mamba_vision",
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(MixerKind::Attention),
            "hyena" => Ok(MixerKind::Hyena),
            "mamba_vision" | "mamba" => Ok(MixerKind::MambaVision),
            _ => Err(Error::config(format!(
                "unknown mixer kind {s:?} (expected attention, hyena or mamba_vision)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Mixer {
    Attention(Attention),
    Hyena(Hyena),
    MambaVision(MambaVision),
}

impl Mixer {
    /// Builds a mixer with default hyperparameters (`heads` is used by
    /// attention only).
    pub fn new<T: Element>(b: &mut Builder<'_, T>, kind: MixerKind, dim: usize, heads: usize) -> Result<Self> {
        Ok(match kind {
            MixerKind::Attention => Mixer::Attention(Attention::new(b, dim, heads)?),
            MixerKind::Hyena => Mixer::Hyena(Hyena::new(b, dim, DEFAULT_ORDER)?),
            MixerKind::MambaVision => Mixer::MambaVision(MambaVision::new(b, dim, DEFAULT_STATE)?),
        })
    }

    pub fn kind(&self) -> MixerKind {
        match self {
            Mixer::Attention(_) => MixerKind::Attention,
            Mixer::Hyena(_) => MixerKind::Hyena,
            Mixer::MambaVision(_) => MixerKind::MambaVision,
        }
    }

    /// `mask` applies to attention only; other mixers reject it.
    pub fn forward<T: Element>(&self, p: &Bound<T>, x: &Var<T>, mask: Option<&Tensor<T>>) -> Result<Var<T>> {
        match (self, mask) {
            (Mixer::Attention(m), _) => m.forward(p, x, mask),
            (Mixer::Hyena(m), None) => m.forward(p, x),
            (Mixer::MambaVision(m), None) => m.forward(p, x),
            (m, Some(_)) => Err(Error::invalid("mixer_forward", format!("{} does not take a shift mask", m.kind()))),
        }
    }

    pub fn flops(&self, batch: usize, n: usize) -> u64 {
        match self {
            Mixer::Attention(m) => m.flops(batch, n),
            Mixer::Hyena(m) => m.flops(batch, n),
            Mixer::MambaVision(m) => m.flops(batch, n),
        }
    }
}

/// Forward flop count of one mixer application to a single length-`n`
/// sequence of width `d`, default hyperparameters.
pub fn flop_count(kind: &str, n: usize, d: usize) -> Result<u64> {
    Ok(match kind.parse::<MixerKind>()? {
        MixerKind::Attention => attention_flops(1, n, d),
        MixerKind::Hyena => hyena_flops(1, n, d, DEFAULT_ORDER),
        MixerKind::MambaVision => mamba_flops(1, n, d, DEFAULT_STATE),
    })
}
