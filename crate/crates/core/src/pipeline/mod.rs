//! Orchestration of the full pipeline: data, training, generation, carving, refinement and evaluation.

mod commands;
mod config;
mod eval;

pub use commands::*;
pub use config::*;
pub use eval::{cmd_eval, compare_maps, EvalReference, EvalReport, ViewMetrics};
