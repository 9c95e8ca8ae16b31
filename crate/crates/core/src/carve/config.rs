use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step size as a fraction of the initial mesh's bounding-box diagonal when no
/// absolute step is configured.
pub const AUTO_STEP_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub normal: f64,
    pub mask: f64,
    pub sides: f64,
    pub laplacian: f64,
    pub normal_reg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            normal: 1.0,
            mask: 2.0,
            sides: 0.1,
            laplacian: 1000.0,
            normal_reg: 0.1,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            normal: 0.0,
            mask: 0.0,
            sides: 0.0,
            laplacian: 0.0,
            normal_reg: 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.normal, self.mask, self.sides, self.laplacian, self.normal_reg];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarveConfig {
    pub total_iterations: usize,
    pub remesh_interval: usize,
    pub step_decay_per_remesh: f64,
    pub sides_decay_per_remesh: f64,
    pub initial_vertices: usize,
    /// Absolute vertex step size; `None` uses `AUTO_STEP_FRACTION` of the bounding-box diagonal.
    pub initial_step_size: Option<f64>,
    pub alpha_threshold: f64,
    pub weights: LossWeights,
    /// Factor the Laplacian and normal-consistency weights reach by the last stage.
    pub regularizer_ramp: f64,
    /// Soft-coverage width in pixels.
    pub softness: f64,
    /// Remesh target as a fraction of the current mean edge length.
    pub remesh_edge_factor: f64,
    /// Lower bound on the remesh target, in pixels of the finest target view, capped at
    /// the current mean edge length.
    pub min_edge_pixels: f64,
    /// Gradients are clipped to this multiple of the running median norm.
    pub clip_factor: f64,
    pub seed: u64,
    /// Directory receiving an OBJ of the mesh at every remesh and at the end.
    pub dump_dir: Option<PathBuf>,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            total_iterations: 2000,
            remesh_interval: 500,
            step_decay_per_remesh: 0.25,
            sides_decay_per_remesh: 0.10,
            initial_vertices: 3000,
            initial_step_size: None,
            alpha_threshold: 0.5,
            weights: LossWeights::default(),
            regularizer_ramp: 10.0,
            softness: crate::raster::DEFAULT_SOFTNESS,
            remesh_edge_factor: 0.5,
            min_edge_pixels: 2.0,
            clip_factor: 10.0,
            seed: 0,
            dump_dir: None,
        }
    }
}

impl CarveConfig {
    pub fn check(&self) -> Result<()> {
        self.weights.check()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.remesh_interval == 0 || self.total_iterations % self.remesh_interval != 0 {
            return bad("remesh_interval must divide total_iterations");
        }
        for d in [self.step_decay_per_remesh, self.sides_decay_per_remesh] {
            if !(0.0..1.0).contains(&d) {
                return bad("decays must lie in [0, 1)");
            }
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold < 1.0) {
            return bad("alpha_threshold must lie in (0, 1)");
        }
        if let Some(s) = self.initial_step_size {
            if !(s > 0.0) {
                return bad("initial_step_size must be positive");
            }
        }
        if !(self.regularizer_ramp >= 1.0) || !(self.softness >= 0.0) || !(self.clip_factor > 1.0) {
            return bad("regularizer_ramp >= 1, softness >= 0 and clip_factor > 1 required");
        }
        if !(self.remesh_edge_factor > 0.0) || !(self.min_edge_pixels >= 0.0) {
            return bad("remesh_edge_factor must be positive and min_edge_pixels non-negative");
        }
        if self.initial_vertices < 4 {
            return bad("initial_vertices must be at least 4");
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.total_iterations / self.remesh_interval
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }
}

/// Weights and step size in effect at `iteration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub weights: LossWeights,
    pub step_size: f64,
    /// Remeshes performed so far.
    pub stage: usize,
}

pub fn schedule(config: &CarveConfig, iteration: usize) -> Result<Schedule> {
    config.check()?;
    if iteration >= config.total_iterations {
        return Err(Error::param(format!(
            "iteration {iteration} beyond total {}",
            config.total_iterations
        )));
    }
    let stage = iteration / config.remesh_interval;
    let last = config.stages().saturating_sub(1).max(1);
    let ramp = 1.0 + (config.regularizer_ramp - 1.0) * stage as f64 / last as f64;
    let w = config.weights;
    let base = config.initial_step_size.unwrap_or(AUTO_STEP_FRACTION);
    Ok(Schedule {
        weights: LossWeights {
            sides: w.sides * (1.0 - config.sides_decay_per_remesh).powi(stage as i32),
            laplacian: w.laplacian * ramp,
            normal_reg: w.normal_reg * ramp,
            ..w
        },
        step_size: base * (1.0 - config.step_decay_per_remesh).powi(stage as i32),
        stage,
    })
}
