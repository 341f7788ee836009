//! The training loop.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mixerbench_tensor::{Element, Tape, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{adam_step, Adam, AdamState};
use super::checkpoint::Checkpoint;
use super::schedule::one_cycle_lr;
use crate::backbones::Model;
use crate::params::{Bound, Params};
use crate::tasks::{
    augment, classification_loss, denoise_loss, segmentation_loss, AugmentConfig, Dataset, DenoiseLossConfig,
    TaskKind, TaskSample, Target,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Denoise,
}

impl LossKind {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Denoising => LossKind::Denoise,
            _ => LossKind::CrossEntropy,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Denoise => "denoise",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            "denoise" => Ok(LossKind::Denoise),
            _ => Err(Error::config(format!("unknown loss `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub pct_warmup: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Validation cadence in optimizer steps; the final step is always
    /// evaluated.
    pub eval_every: usize,
    /// Caps the step count regardless of `epochs`.
    pub max_steps: Option<usize>,
    pub augment: Option<AugmentConfig>,
    pub denoise: DenoiseLossConfig,
    pub adam: Adam,
}

impl TrainConfig {
    /// Defaults for a task: jitter stays off for denoising inputs.
    pub fn for_task(kind: TaskKind) -> Self {
        TrainConfig {
            max_lr: 1e-3,
            epochs: 20,
            batch_size: 4,
            pct_warmup: 0.3,
            seed: 0,
            loss_kind: LossKind::for_task(kind),
            eval_every: 50,
            max_steps: None,
            augment: Some(match kind {
                TaskKind::Denoising => AugmentConfig::without_jitter(),
                _ => AugmentConfig::default(),
            }),
            denoise: DenoiseLossConfig::default(),
            adam: Adam::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0) {
            return Err(Error::config(format!("max_lr must be positive, got {}", self.max_lr)));
        }
        if !(self.pct_warmup > 0.0 && self.pct_warmup < 1.0) {
            return Err(Error::config(format!("pct_warmup must lie in (0, 1), got {}", self.pct_warmup)));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("batch_size and eval_every must be positive"));
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return Err(Error::config("epochs must be positive"));
        }
        Ok(())
    }

    pub fn total_steps(&self, train_len: usize) -> usize {
        let per_epoch = train_len.div_ceil(self.batch_size);
        let steps = self.epochs * per_epoch;
        self.max_steps.map_or(steps, |cap| if self.epochs == 0 { cap } else { cap.min(steps) })
    }
}

/// Anything with trainable parameters that maps an input image to a
/// prediction the task loss understands.
pub trait Trainable<T: Element> {
    fn predict(&self, p: &Bound<T>, input: &Var<T>) -> Result<Var<T>>;

    /// Identifies the architecture in checkpoints.
    fn config_hash(&self) -> String;
}

impl<T: Element> Trainable<T> for Model {
    fn predict(&self, p: &Bound<T>, input: &Var<T>) -> Result<Var<T>> {
        self.forward(p, input)
    }

    fn config_hash(&self) -> String {
        self.config.hash()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T: Element> {
    /// Parameters at the lowest validation loss.
    pub best: Checkpoint<T>,
    pub curve: Vec<CurvePoint>,
    pub steps: usize,
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Task loss of one prediction.
pub fn sample_loss<T: Element>(
    pred: &Var<T>,
    sample: &TaskSample<T>,
    kind: LossKind,
    denoise: &DenoiseLossConfig,
) -> Result<Var<T>> {
    match (&sample.target, kind) {
        (Target::Mask { data, .. }, LossKind::CrossEntropy) => segmentation_loss(pred, data),
        (Target::Label(l), LossKind::CrossEntropy) => classification_loss(pred, *l),
        (Target::Clean(clean), LossKind::Denoise) => denoise_loss(pred, clean, denoise),
        (t, k) => Err(Error::config(format!(
            "loss {k} does not apply to {} targets",
            match t {
                Target::Mask { .. } => "mask",
                Target::Clean(_) => "clean image",
                Target::Label(_) => "label",
            }
        ))),
    }
}

/// Mean loss over `samples` without recording gradients.
pub fn mean_loss<T: Element, M: Trainable<T>>(
    model: &M,
    params: &Params<T>,
    samples: &[TaskSample<T>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let bound = params.bind(None);
    let mut total = 0.0;
    for s in samples {
        let pred = model.predict(&bound, &Var::constant(s.input.clone()))?;
        total += sample_loss(&pred, s, cfg.loss_kind, &cfg.denoise)?.value().item()?.f64();
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Trains `params` in place with Adam and a one-cycle schedule, then
/// restores the parameters of the lowest validation loss.
pub fn train<T: Element, M: Trainable<T>>(
    model: &M,
    params: &mut Params<T>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::config("training needs nonempty train and validation sets"));
    }
    let cast = |s: &[TaskSample<f64>]| s.iter().map(|x| x.cast::<T>()).collect::<Result<Vec<_>>>();
    let train_set = cast(&data.train)?;
    let val_set = cast(&data.val)?;
    let total = cfg.total_steps(train_set.len());
    if total == 0 {
        return Err(Error::config("zero training steps"));
    }
    let hash = model.config_hash();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(params);
    let mut order: Vec<usize> = Vec::new();
    let mut curve = Vec::new();
    let mut best: Option<Checkpoint<T>> = None;
    let (mut running, mut running_n) = (0.0, 0usize);

    for step in 0..total {
        if order.len() < cfg.batch_size {
            let mut epoch: Vec<usize> = (0..train_set.len()).collect();
            epoch.shuffle(&mut rng);
            order.extend(epoch);
        }
        let batch: Vec<usize> = order.drain(..cfg.batch_size.min(order.len())).collect();
        let lr = one_cycle_lr(step, total, cfg.max_lr, cfg.pct_warmup)?;

        let tape = Tape::new();
        let bound = params.bind(Some(&tape));
        let mut loss: Option<Var<T>> = None;
        for &i in &batch {
            let sample = match &cfg.augment {
                Some(a) => augment(&train_set[i], a, &mut rng),
                None => train_set[i].clone(),
            };
            let pred = model.predict(&bound, &Var::constant(sample.input.clone()))?;
            let l = sample_loss(&pred, &sample, cfg.loss_kind, &cfg.denoise)?;
            loss = Some(match loss {
                None => l,
                Some(acc) => acc.add(&l)?,
            });
        }
        let loss = loss.expect("nonempty batch").mul_scalar(1.0 / batch.len() as f64)?;
        let value = loss.value().item()?.f64();
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step, value });
        }
        let grads = bound.grads(&tape.backward(&loss)?)?;
        drop(bound);
        adam_step(params, &grads, &mut state, lr, &cfg.adam)?;
        running += value;
        running_n += 1;

        let done = step + 1;
        if done % cfg.eval_every == 0 || done == total {
            let val_loss = mean_loss(model, params, &val_set, cfg)?;
            if !val_loss.is_finite() {
                return Err(Error::NonFiniteLoss { step, value: val_loss });
            }
            curve.push(CurvePoint {
                step: done,
                train_loss: running / running_n as f64,
                val_loss,
                lr,
            });
            (running, running_n) = (0.0, 0);
            if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
                best = Some(Checkpoint::capture(params, &hash, done, val_loss));
            }
        }
    }
    let best = best.expect("final step is always evaluated");
    best.load_into(params)?;
    Ok(TrainReport {
        best,
        curve,
        steps: total,
    })
}
