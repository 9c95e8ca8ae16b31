use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carve::CarveConfig;
use crate::denoiser::{Architecture, SynthRanges, TrainConfig};
use crate::diffusion::{default_beta_range, linear_schedule, GuidanceParams, ResampleParams, VarianceSchedule};
use crate::error::{Error, Result};
use crate::mesh::BodyPose;
use crate::raster::{camera_ring, Camera};

/// Prefix of environment overrides: `NORMCARVE_<SECTION>__<KEY>=<toml value>`.
pub const ENV_PREFIX: &str = "NORMCARVE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub checkpoints: PathBuf,
    pub outputs: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: "data".into(), checkpoints: "checkpoints".into(), outputs: "outputs".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub count: usize,
    pub ranges: SynthRanges,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { count: 8, ranges: SynthRanges::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: 200, learning_rate: t.learning_rate, batch_size: t.batch_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub steps: usize,
    /// Linear β endpoints; unset uses the default range for `steps`.
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub guidance: GuidanceParams,
    pub resample: ResampleParams,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_start: None,
            beta_end: None,
            guidance: GuidanceParams::default(),
            resample: ResampleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewRing {
    pub n_views: usize,
    pub yaw_step: f64,
}

impl Default for ViewRing {
    fn default() -> Self {
        Self { n_views: 36, yaw_step: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    /// Subject used by generate/carve/refine when no dataset example is named.
    pub pose: BodyPose<f64>,
    /// Grid density of the proxy mesh that carving starts from.
    pub cells_per_height: usize,
}

impl Default for ProxySection {
    fn default() -> Self {
        Self { pose: BodyPose::default(), cells_per_height: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    /// Iterations of the second carve; unset reuses the first stage's count.
    pub iterations: Option<usize>,
    pub remesh_interval: Option<usize>,
}

impl Default for RefineSection {
    fn default() -> Self {
        Self { iterations: None, remesh_interval: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mandatory at run time, from the file, the environment or `--seed`.
    pub seed: Option<u64>,
    pub resolution: usize,
    pub paths: Paths,
    pub data: DataConfig,
    pub model: Architecture,
    pub train: TrainSection,
    pub diffusion: DiffusionSection,
    pub carve: CarveConfig,
    pub views: ViewRing,
    pub proxy: ProxySection,
    pub refine: RefineSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            resolution: 32,
            paths: Paths::default(),
            data: DataConfig::default(),
            model: Architecture::default(),
            train: TrainSection::default(),
            diffusion: DiffusionSection::default(),
            carve: CarveConfig::default(),
            views: ViewRing::default(),
            proxy: ProxySection::default(),
            refine: RefineSection::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Sets `path` inside `table`, creating intermediate tables.
fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| config_err("empty override key"))?;
    let mut cur = table;
    for key in parents {
        let entry = cur.entry(key.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override path {} crosses non-table key {key}", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// TOML literal if it parses as one, otherwise a plain string.
fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl PipelineConfig {
    /// Parses TOML text and applies `NORMCARVE_*` overrides from `env`.
    pub fn from_toml_with_env<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len()).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(config_err(format!("malformed override {key}")));
            }
            set_path(&mut table, &path, parse_override(&raw))?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_env(text, std::iter::empty())
    }

    /// Reads `path` (or starts from defaults) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn check(&self) -> Result<()> {
        if !(8..=64).contains(&self.resolution) {
            return Err(config_err(format!("resolution must lie in 8..=64, got {}", self.resolution)));
        }
        if self.data.count == 0 {
            return Err(config_err("data.count must be positive"));
        }
        self.data.ranges.check()?;
        self.model.check()?;
        if self.model.steps != self.diffusion.steps {
            return Err(config_err(format!(
                "model.steps = {} but diffusion.steps = {}",
                self.model.steps, self.diffusion.steps
            )));
        }
        self.optimizer().check()?;
        self.diffusion.guidance.check()?;
        self.diffusion.resample.timestep(self.diffusion.steps)?;
        self.schedule()?;
        self.carve.check()?;
        if self.views.n_views == 0 {
            return Err(config_err("views.n_views must be positive"));
        }
        self.refine_carve().check()?;
        Ok(())
    }

    /// Training settings; condition dropout comes from the guidance section.
    pub fn optimizer(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            dropout_prob: self.diffusion.guidance.dropout_prob,
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| config_err("a seed is mandatory (config `seed`, NORMCARVE_SEED or --seed)"))
    }

    pub fn schedule(&self) -> Result<VarianceSchedule<f32>> {
        let (lo, hi) = default_beta_range(self.diffusion.steps);
        let start = self.diffusion.beta_start.unwrap_or(lo);
        let end = self.diffusion.beta_end.unwrap_or(hi);
        linear_schedule(self.diffusion.steps, start, end)
    }

    pub fn front_camera(&self) -> Result<Camera<f64>> {
        self.data.ranges.camera(self.resolution)
    }

    pub fn ring(&self) -> Result<Vec<Camera<f64>>> {
        camera_ring(self.views.n_views, self.views.yaw_step, &self.front_camera()?)
    }

    /// First-stage carve settings tied to the pipeline seed.
    pub fn stage_carve(&self) -> Result<CarveConfig> {
        let mut c = self.carve.clone();
        c.seed = self.seed()?;
        Ok(c)
    }

    /// Second-stage carve: no side term, optionally a different iteration budget.
    pub fn refine_carve(&self) -> CarveConfig {
        let mut c = self.carve.clone();
        c.seed = self.seed.unwrap_or(0).wrapping_add(1);
        c.weights.sides = 0.0;
        if let Some(n) = self.refine.iterations {
            c.total_iterations = n;
        }
        if let Some(n) = self.refine.remesh_interval {
            c.remesh_interval = n;
        }
        c
    }

    pub fn dataset_dir(&self, out: &Path) -> PathBuf {
        out.join(&self.paths.dataset)
    }

    pub fn checkpoint_path(&self, out: &Path) -> PathBuf {
        out.join(&self.paths.checkpoints).join("denoiser.ckpt")
    }

    pub fn outputs_dir(&self, out: &Path) -> PathBuf {
        out.join(&self.paths.outputs)
    }
}
