//! Token mixers, vision backbones, synthetic tasks, training and
//! context-length benchmarks.

pub mod backbones;
pub mod bench;
mod error;
pub mod mixers;
pub mod oracle;
pub mod params;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
pub use backbones::{HeadSpec, ImageSpec, Model, ModelConfig};
pub use mixers::{Mixer, MixerKind};
pub use params::{Bound, Builder, Linear, Params, ParamId};
