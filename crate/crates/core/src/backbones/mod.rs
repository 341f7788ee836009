//! ViT and Swin backbones built from interchangeable mixer blocks.

mod block;
mod config;
mod decoder;
pub mod grid;
mod model;
mod swin;
mod vit;

pub use block::{Block, MLP_RATIO};
pub use config::{
    context_length, BackboneKind, ModelConfig, PosEmbed, SWIN_PATCHES, SWIN_STAGES, SWIN_WINDOWS, VIT_PATCHES,
};
pub use decoder::{SwinDecoder, UpPath, VitDecoder, MIN_WIDTH};
pub use grid::{cyclic_shift, inverse_cyclic_shift, patchify, unpatchify, window_partition, window_reverse};
pub use model::{Backbone, Head, HeadSpec, ImageSpec, Model, ParamCount};
pub use swin::{Merge, Stage, Swin};
pub use vit::{Vit, VitFeatures};
