//! Normal-map driven mesh optimisation.

mod config;
mod loss;
mod optimize;

pub use config::{schedule, CarveConfig, LossWeights, Schedule, AUTO_STEP_FRACTION};
pub use loss::{mask_loss, normal_loss, side_loss, total_loss, CarveTargets, LossOptions, LossReport, SideView, TargetView};
pub use optimize::{carve, CarveResult, IterationLog};
