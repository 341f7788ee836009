//! Task selection and seeded train/validation/test splits.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generate::{gen_classification, gen_denoising, gen_segmentation_with, NoiseSpec, SegmentationConfig};
use super::sample::TaskSample;
use crate::backbones::{HeadSpec, ImageSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Segmentation,
    Denoising,
    Classification,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Segmentation, TaskKind::Denoising, TaskKind::Classification];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Segmentation => "segmentation",
            TaskKind::Denoising => "denoising",
            TaskKind::Classification => "classification",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmentation" | "seg" => Ok(TaskKind::Segmentation),
            "denoising" | "denoise" => Ok(TaskKind::Denoising),
            "classification" | "cls" => Ok(TaskKind::Classification),
            _ => Err(Error::config(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub extents: Vec<usize>,
    pub num_shapes: usize,
    pub segmentation: SegmentationConfig,
    pub noise: NoiseSpec,
    pub positive_rate: f64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, extents: Vec<usize>) -> Self {
        TaskSpec {
            kind,
            extents,
            num_shapes: 4,
            segmentation: SegmentationConfig::default(),
            noise: NoiseSpec::default(),
            positive_rate: 0.15,
        }
    }

    /// Default extents: 64x64 in 2D, 32^3 in 3D.
    pub fn default_extents(rank: usize) -> Vec<usize> {
        if rank == 3 {
            vec![32; 3]
        } else {
            vec![64; rank]
        }
    }

    pub fn generate(&self, seed: u64) -> Result<TaskSample<f64>> {
        match self.kind {
            TaskKind::Segmentation => gen_segmentation_with(seed, &self.extents, self.num_shapes, &self.segmentation),
            TaskKind::Denoising => gen_denoising(seed, &self.extents, &self.noise),
            TaskKind::Classification => gen_classification(seed, &self.extents, self.positive_rate),
        }
    }

    pub fn image(&self) -> ImageSpec {
        ImageSpec {
            channels: 1,
            extents: self.extents.clone(),
        }
    }

    pub fn head(&self) -> HeadSpec {
        match self.kind {
            TaskKind::Segmentation => HeadSpec::Dense {
                out_channels: self.segmentation.num_classes,
            },
            TaskKind::Denoising => HeadSpec::Dense { out_channels: 1 },
            TaskKind::Classification => HeadSpec::Classify { classes: 2 },
        }
    }
}

/// Samples split 60/20/20 into train, validation and test.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TaskSample<f64>>,
    pub val: Vec<TaskSample<f64>>,
    pub test: Vec<TaskSample<f64>>,
}

/// Sample seeds for `n` samples, shuffled and split 60/20/20.
pub fn split_seeds(n: usize, seed: u64) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    seeds.shuffle(&mut rng);
    let n_train = n * 3 / 5;
    let n_val = n / 5;
    let test = seeds.split_off(n_train + n_val);
    let val = seeds.split_off(n_train);
    (seeds, val, test)
}

impl Dataset {
    pub fn generate(spec: &TaskSpec, n: usize, seed: u64) -> Result<Dataset> {
        if n < 5 {
            return Err(Error::invalid("dataset", format!("need at least 5 samples, got {n}")));
        }
        let (train, val, test) = split_seeds(n, seed);
        let gen = |s: Vec<u64>| s.into_iter().map(|s| spec.generate(s)).collect::<Result<Vec<_>>>();
        Ok(Dataset {
            train: gen(train)?,
            val: gen(val)?,
            test: gen(test)?,
        })
    }
}
