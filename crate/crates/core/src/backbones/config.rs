//! Model configuration and its plain-text `key = value` format.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::mixers::MixerKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    Vit,
    Swin,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::Vit => "vit",
            BackboneKind::Swin => "swin",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vit" => Ok(BackboneKind::Vit),
            "swin" => Ok(BackboneKind::Swin),
            _ => Err(Error::config(format!("unknown backbone {s:?} (expected vit or swin)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosEmbed {
    Learned,
    None,
}

impl PosEmbed {
    pub fn name(self) -> &'static str {
        match self {
            PosEmbed::Learned => "learned",
            PosEmbed::None => "none",
        }
    }
}

impl FromStr for PosEmbed {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(PosEmbed::Learned),
            "none" => Ok(PosEmbed::None),
            _ => Err(Error::config(format!("unknown pos_embed {s:?} (expected learned or none)"))),
        }
    }
}

pub const VIT_PATCHES: [usize; 4] = [4, 8, 16, 32];
pub const SWIN_PATCHES: [usize; 2] = [2, 4];
pub const SWIN_WINDOWS: [usize; 3] = [4, 8, 16];
pub const SWIN_STAGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub mixer: MixerKind,
    pub spatial_rank: usize,
    pub patch_size: usize,
    /// Tokens per window side (Swin only).
    pub window_size: usize,
    pub embed_dim: usize,
    /// One entry for ViT, one per stage for Swin.
    pub depth: Vec<usize>,
    pub num_heads: usize,
    pub shift_enabled: bool,
    pub pos_embed: PosEmbed,
}

impl ModelConfig {
    pub fn vit(mixer: MixerKind, spatial_rank: usize, patch_size: usize) -> Self {
        ModelConfig {
            backbone: BackboneKind::Vit,
            mixer,
            spatial_rank,
            patch_size,
            window_size: 8,
            embed_dim: 64,
            depth: vec![2],
            num_heads: 4,
            shift_enabled: false,
            pos_embed: PosEmbed::Learned,
        }
    }

    /// Swin with shifted windows for attention and without for the
    /// alternatives.
    pub fn swin(mixer: MixerKind, spatial_rank: usize, patch_size: usize, window_size: usize) -> Self {
        ModelConfig {
            backbone: BackboneKind::Swin,
            mixer,
            spatial_rank,
            patch_size,
            window_size,
            embed_dim: 32,
            depth: vec![2; SWIN_STAGES],
            num_heads: 2,
            shift_enabled: mixer == MixerKind::Attention,
            pos_embed: PosEmbed::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.spatial_rank) {
            return Err(Error::config(format!("spatial_rank must be 2 or 3, got {}", self.spatial_rank)));
        }
        match self.backbone {
            BackboneKind::Vit => {
                if !VIT_PATCHES.contains(&self.patch_size) {
                    return Err(Error::config(format!(
                        "vit patch_size must be one of {VIT_PATCHES:?}, got {}",
                        self.patch_size
                    )));
                }
                if self.depth.len() != 1 {
                    return Err(Error::config("vit depth is a single block count"));
                }
                if self.shift_enabled {
                    return Err(Error::config("shift_enabled applies to swin only"));
                }
            }
            BackboneKind::Swin => {
                if !SWIN_PATCHES.contains(&self.patch_size) {
                    return Err(Error::config(format!(
                        "swin patch_size must be one of {SWIN_PATCHES:?}, got {}",
                        self.patch_size
                    )));
                }
                if !SWIN_WINDOWS.contains(&self.window_size) {
                    return Err(Error::config(format!(
                        "swin window_size must be one of {SWIN_WINDOWS:?}, got {}",
                        self.window_size
                    )));
                }
                if self.depth.len() != SWIN_STAGES {
                    return Err(Error::config(format!("swin depth lists {SWIN_STAGES} stage depths")));
                }
                if self.shift_enabled && self.mixer != MixerKind::Attention {
                    return Err(Error::config(format!(
                        "shifted windows are only used with attention, not {}",
                        self.mixer
                    )));
                }
            }
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim must be positive"));
        }
        match self.mixer {
            MixerKind::Attention if self.num_heads == 0 || self.embed_dim % self.num_heads != 0 => Err(
                Error::config(format!("embed_dim {} is not divisible by num_heads {}", self.embed_dim, self.num_heads)),
            ),
            MixerKind::MambaVision if self.embed_dim % 2 != 0 => {
                Err(Error::config(format!("mamba_vision needs an even embed_dim, got {}", self.embed_dim)))
            }
            _ => Ok(()),
        }
    }

    /// Canonical text form; round-trips through [`ModelConfig::parse`].
    pub fn to_text(&self) -> String {
        let depth: Vec<String> = self.depth.iter().map(|d| d.to_string()).collect();
        format!(
            "backbone = {}\nmixer = {}\nspatial_rank = {}\npatch_size = {}\nwindow_size = {}\nembed_dim = {}\ndepth = {}\nnum_heads = {}\nshift_enabled = {}\npos_embed = {}\n",
            self.backbone,
            self.mixer,
            self.spatial_rank,
            self.patch_size,
            self.window_size,
            self.embed_dim,
            depth.join(","),
            self.num_heads,
            self.shift_enabled,
            self.pos_embed.name()
        )
    }

    /// Hex SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses `key = value` lines (`#` starts a comment). Keys not present
    /// keep the values of `base`; the result is validated.
    pub fn parse_with(text: &str, base: ModelConfig) -> Result<Self> {
        let mut cfg = base;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, ModelConfig::vit(MixerKind::Attention, 2, 16))
    }

    /// Sets one field from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::config(format!("{key}: expected a non-negative integer, got {v:?}")))
        };
        match key {
            "backbone" => self.backbone = value.parse()?,
            "mixer" => self.mixer = value.parse()?,
            "spatial_rank" => self.spatial_rank = int(value)?,
            "patch_size" => self.patch_size = int(value)?,
            "window_size" => self.window_size = int(value)?,
            "embed_dim" => self.embed_dim = int(value)?,
            "depth" => self.depth = value.split(',').map(|v| int(v.trim())).collect::<Result<_>>()?,
            "num_heads" => self.num_heads = int(value)?,
            "shift_enabled" => {
                self.shift_enabled = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(Error::config(format!("shift_enabled: expected true or false, got {value:?}"))),
                }
            }
            "pos_embed" => self.pos_embed = value.parse()?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

/// Tokens processed jointly by one mixer application.
pub fn context_length(cfg: &ModelConfig, extents: &[usize]) -> usize {
    match cfg.backbone {
        BackboneKind::Vit => extents.iter().map(|e| e / cfg.patch_size).product(),
        BackboneKind::Swin => cfg.window_size.pow(cfg.spatial_rank as u32),
    }
}
