//! A backbone plus a task head.

use mixerbench_tensor::{Element, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BackboneKind, ModelConfig};
use super::decoder::{SwinDecoder, VitDecoder};
use super::swin::Swin;
use super::vit::Vit;
use crate::params::{Bound, Builder, Linear, Params};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSpec {
    pub channels: usize,
    pub extents: Vec<usize>,
}

impl ImageSpec {
    pub fn new(channels: usize, extents: &[usize]) -> Self {
        ImageSpec {
            channels,
            extents: extents.to_vec(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.channels).chain(self.extents.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSpec {
    /// Mean-pooled tokens and a linear classifier producing `[classes]`.
    Classify { classes: usize },
    /// Pixel-level decoder producing `[out_channels, E..]`.
    Dense { out_channels: usize },
}

#[derive(Debug, Clone)]
pub enum Backbone {
    Vit(Vit),
    Swin(Swin),
}

#[derive(Debug, Clone)]
pub enum Head {
    Classify(Linear),
    VitDense(VitDecoder),
    SwinDense(SwinDecoder),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub backbone: usize,
    pub head: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub image: ImageSpec,
    pub head_spec: HeadSpec,
    pub backbone: Backbone,
    pub head: Head,
}

impl Model {
    /// Builds the model and its freshly initialized parameters.
    pub fn build<T: Element>(config: &ModelConfig, image: &ImageSpec, head_spec: HeadSpec, seed: u64) -> Result<(Model, Params<T>)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut b = Builder::new(&mut params, &mut rng);
        let (rank, c) = (config.spatial_rank, image.channels);
        let backbone = match config.backbone {
            BackboneKind::Vit => Backbone::Vit(Vit::new(&mut b.scope("backbone"), config, c, &image.extents)?),
            BackboneKind::Swin => Backbone::Swin(Swin::new(&mut b.scope("backbone"), config, c, &image.extents)?),
        };
        let mut hb = b.scope("head");
        let head = match (head_spec, &backbone) {
            (HeadSpec::Classify { classes }, bb) => {
                let width = match bb {
                    Backbone::Vit(v) => v.dim,
                    Backbone::Swin(s) => s.stages.last().map_or(config.embed_dim, |st| st.dim),
                };
                Head::Classify(hb.linear("classifier", width, classes, true)?)
            }
            (HeadSpec::Dense { out_channels }, Backbone::Vit(v)) => {
                Head::VitDense(VitDecoder::new(&mut hb, rank, v.dim, v.patch, c, out_channels)?)
            }
            (HeadSpec::Dense { out_channels }, Backbone::Swin(s)) => {
                let dims: Vec<usize> = s.stages.iter().map(|st| st.dim).collect();
                Head::SwinDense(SwinDecoder::new(&mut hb, rank, &dims, s.patch, c, out_channels)?)
            }
        };
        Ok((
            Model {
                config: config.clone(),
                image: image.clone(),
                head_spec,
                backbone,
                head,
            },
            params,
        ))
    }

    fn check_input<T: Element>(&self, image: &Var<T>) -> Result<()> {
        if image.shape() != self.image.shape() {
            return Err(Error::invalid(
                "model_forward",
                format!("image {:?}, model built for {:?}", image.shape(), self.image.shape()),
            ));
        }
        Ok(())
    }

    /// Backbone feature grids: ViT skip levels and final tokens, or the
    /// Swin stage pyramid.
    pub fn features<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<Vec<Var<T>>> {
        self.check_input(image)?;
        match &self.backbone {
            Backbone::Vit(v) => Ok(v.forward(p, image)?.levels.to_vec()),
            Backbone::Swin(s) => s.forward(p, image),
        }
    }

    /// The backbone outputs a head consumes at the end of the network: the
    /// final ViT tokens or every Swin stage.
    pub fn outputs<'a, T: Element>(&self, levels: &'a [Var<T>]) -> &'a [Var<T>] {
        match self.backbone {
            Backbone::Vit(_) => &levels[levels.len() - 1..],
            Backbone::Swin(_) => levels,
        }
    }

    /// Sum of all backbone outputs; the benchmark's stand-in loss.
    pub fn backbone_loss<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<Var<T>> {
        let levels = self.features(p, image)?;
        let mut total: Option<Var<T>> = None;
        for o in self.outputs(&levels) {
            let s = o.sum()?;
            total = Some(match total {
                None => s,
                Some(t) => t.add(&s)?,
            });
        }
        total.ok_or_else(|| Error::invalid("backbone_loss", "no outputs"))
    }

    /// Head output: `[classes]` logits or a `[out, E..]` map.
    pub fn forward<T: Element>(&self, p: &Bound<T>, image: &Var<T>) -> Result<Var<T>> {
        let levels = self.features(p, image)?;
        match &self.head {
            Head::Classify(l) => {
                let last = &levels[levels.len() - 1];
                let d = *last.shape().last().unwrap_or(&0);
                let pooled = last.reshape([last.numel() / d, d])?.mean_axis(0, true)?;
                Ok(l.forward(p, &pooled)?.reshape([l.dout])?)
            }
            Head::VitDense(dec) => dec.forward(p, &levels, image),
            Head::SwinDense(dec) => dec.forward(p, &levels, image),
        }
    }

    pub fn context_length(&self) -> usize {
        super::config::context_length(&self.config, &self.image.extents)
    }

    pub fn param_count<T: Element>(&self, params: &Params<T>) -> ParamCount {
        ParamCount {
            backbone: params.count("backbone."),
            head: params.count("head."),
        }
    }
}
