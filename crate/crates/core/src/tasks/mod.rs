//! Synthetic tasks, losses and metrics.

mod augment;
mod dataset;
mod generate;
mod loss;
mod metrics;
mod sample;

pub use augment::{apply_augment, augment, AffineParams, AugmentConfig};
pub use dataset::{split_seeds, Dataset, TaskKind, TaskSpec};
pub use generate::{
    classification_label, classification_parts, denoising_parts, denoising_ratio, gen_classification,
    gen_denoising, gen_segmentation, gen_segmentation_with, ClassificationParts, DenoisingParts, NoiseSpec,
    SegmentationConfig,
};
pub use loss::{
    blur_matrix, charbonnier, classification_loss, cross_entropy, denoise_loss, gaussian_blur, mse,
    segmentation_loss, DenoiseLossConfig, GaussianTerm,
};
pub use metrics::{auroc, bootstrap_ci, dice, percentile, ssim, ssim_with_range, SSIM_K1, SSIM_K2, SSIM_WINDOW};
pub use sample::{TaskSample, Target, MAGIC, VERSION};
