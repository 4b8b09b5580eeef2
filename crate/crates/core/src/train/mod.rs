//! Manual reverse-mode training: losses, gradients, Adam, the fit loop, and
//! per-term controls.

mod adam;
mod controls;
mod fit;
mod grad;
mod metrics;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use controls::{set_term_control, Selector, TermAction, TermControls};
pub use fit::{fit, fit_with, GridDataset, Loss, StepRecord, TermGain, TrainConfig, TrainLog};
pub use grad::{backward, grad_check, loss, GradCheckReport, GradientSet, REL_ERROR_FLOOR};
pub use metrics::{mse_loss, psnr, psnr_from_mse, psnr_quantized, ssim};
