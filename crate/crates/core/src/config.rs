//! Experiment configuration: one TOML file with sections, plus `key=value`
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserConfig, LossWeighting, Parameterization, TrainConfig};
use crate::diffusion::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::gp_prior::{LtvModel, DEFAULT_DENSE_BUDGET};
use crate::hierarchy::{KeyStateVariances, WaypointSpec};
use crate::maze::{DatasetConfig, MazeMap};
use crate::structured_prior::K_Y_FLOOR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MazeSection {
    /// Maze file; empty selects the built-in map.
    pub file: String,
    pub min_cell_distance: usize,
}

impl Default for MazeSection {
    fn default() -> Self {
        MazeSection { file: String::new(), min_cell_distance: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub count: usize,
    pub horizon: usize,
    pub dt: f64,
    pub retry_budget: usize,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { count: 2000, horizon: 64, dt: 0.1, retry_budget: 100, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub q_c: f64,
    pub sigma0: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        GpSection { q_c: 1.0, sigma0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFamily {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleFamily,
    pub n_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub cosine_s: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { kind: ScheduleFamily::Cosine, n_steps: 64, beta_min: 1e-4, beta_max: 0.02, cosine_s: 0.008 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaypointSection {
    pub n_waypoints: usize,
    pub include_endpoints: bool,
    pub endpoint_variance: f64,
    pub interior_variance: f64,
    pub start_variance: f64,
}

impl Default for WaypointSection {
    fn default() -> Self {
        let v = KeyStateVariances::default();
        WaypointSection {
            n_waypoints: 6,
            include_endpoints: true,
            endpoint_variance: v.endpoint,
            interior_variance: v.interior,
            start_variance: v.start,
        }
    }
}

/// Network and optimizer settings of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSection {
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub parameterization: Parameterization,
    pub weighting: LossWeighting,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for LevelSection {
    fn default() -> Self {
        Self::lower_default()
    }
}

impl LevelSection {
    fn lower_default() -> Self {
        LevelSection {
            hidden_dim: 256,
            hidden_layers: 4,
            embed_dim: 32,
            parameterization: Parameterization::PredictWhitenedClean,
            weighting: LossWeighting::PosteriorMean,
            steps: 10_000,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            clip_norm: 10.0,
            log_every: 500,
            seed: 11,
        }
    }

    fn upper_default() -> Self {
        LevelSection {
            hidden_dim: 128,
            hidden_layers: 3,
            parameterization: Parameterization::PredictClean,
            weighting: LossWeighting::Clean,
            steps: 20_000,
            learning_rate: 1e-2,
            seed: 13,
            ..Self::lower_default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            steps: self.steps,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
            log_every: self.log_every,
            weighting: self.weighting,
        }
    }

    /// Apply this section's architecture to a shape-only configuration.
    pub fn apply(&self, mut cfg: DenoiserConfig) -> DenoiserConfig {
        cfg.hidden_dim = self.hidden_dim;
        cfg.hidden_layers = self.hidden_layers;
        cfg.embed_dim = self.embed_dim;
        cfg.parameterization = self.parameterization;
        cfg
    }

    fn validate(&self, name: &str) -> Result<()> {
        self.train_config().validate()?;
        if self.hidden_dim == 0 || self.hidden_layers == 0 {
            return Err(Error::InvalidArgument(format!("[{name}] needs hidden_dim and hidden_layers >= 1")));
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("[{name}] embed_dim must be even and >= 2")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub out_dir: String,
    /// Gain-cache file; empty means `<out_dir>/gains.bin`.
    pub cache_file: String,
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection { out_dir: "runs".into(), cache_file: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub maze: MazeSection,
    pub data: DataSection,
    pub gp: GpSection,
    pub schedule: ScheduleSection,
    pub waypoints: WaypointSection,
    pub lower: LevelSection,
    pub upper: LevelSection,
    pub eval: EvalConfig,
    pub paths: PathSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            maze: MazeSection::default(),
            data: DataSection::default(),
            gp: GpSection::default(),
            schedule: ScheduleSection::default(),
            waypoints: WaypointSection::default(),
            lower: LevelSection::lower_default(),
            upper: LevelSection::upper_default(),
            eval: EvalConfig::default(),
            paths: PathSection::default(),
        }
    }
}

/// Recursively overlay `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Set `dotted.key` in `table` to `raw`, read as a TOML value when it parses
/// as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidArgument(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("override key {key:?} descends into a non-table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    /// Missing keys take the defaults, so a partial `[upper]` section keeps
    /// the upper level's own defaults.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        let mut table: toml::Table = toml::from_str(&Config::default().to_toml()).expect("defaults serialize");
        merge(&mut table, user);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read `path` (or start from the defaults) and apply `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Config::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let d = &self.data;
        if d.count == 0 {
            return bad("data.count must be positive".into());
        }
        if d.horizon < 2 {
            return bad("data.horizon must be >= 2".into());
        }
        if !(d.dt > 0.0 && d.dt.is_finite()) {
            return bad("data.dt must be positive".into());
        }
        if d.retry_budget == 0 {
            return bad("data.retry_budget must be positive".into());
        }
        if d.horizon * 4 > DEFAULT_DENSE_BUDGET {
            return bad(format!("data.horizon {} exceeds the dense kernel budget", d.horizon));
        }
        if !(self.gp.q_c > 0.0 && self.gp.sigma0 > 0.0) {
            return bad("gp.q_c and gp.sigma0 must be positive".into());
        }
        self.schedule()?;
        self.waypoint_spec()?;
        let w = &self.waypoints;
        for (name, v) in [
            ("endpoint_variance", w.endpoint_variance),
            ("interior_variance", w.interior_variance),
            ("start_variance", w.start_variance),
        ] {
            if !(v >= K_Y_FLOOR && v.is_finite()) {
                return bad(format!("waypoints.{name} must be >= {K_Y_FLOOR:e}"));
            }
        }
        self.lower.validate("lower")?;
        self.upper.validate("upper")?;
        if self.eval.episodes == 0 || !(self.eval.tolerance_cells > 0.0) {
            return bad("eval.episodes and eval.tolerance_cells must be positive".into());
        }
        if self.paths.out_dir.is_empty() {
            return bad("paths.out_dir must not be empty".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let s = &self.schedule;
        let kind = match s.kind {
            ScheduleFamily::Linear => ScheduleKind::Linear { beta_min: s.beta_min, beta_max: s.beta_max },
            ScheduleFamily::Cosine => ScheduleKind::Cosine { s: s.cosine_s },
        };
        make_schedule(kind, s.n_steps)
    }

    pub fn ltv_model(&self) -> Result<LtvModel> {
        LtvModel::new(self.data.dt, 2, self.gp.q_c, self.gp.sigma0)
    }

    pub fn waypoint_spec(&self) -> Result<WaypointSpec> {
        WaypointSpec::new(self.waypoints.n_waypoints, self.data.horizon, self.waypoints.include_endpoints)
    }

    pub fn variances(&self) -> KeyStateVariances {
        KeyStateVariances {
            endpoint: self.waypoints.endpoint_variance,
            interior: self.waypoints.interior_variance,
            start: self.waypoints.start_variance,
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            count: self.data.count,
            horizon: self.data.horizon,
            dt: self.data.dt,
            min_cell_distance: self.maze.min_cell_distance,
            retry_budget: self.data.retry_budget,
        }
    }

    pub fn load_map(&self) -> Result<MazeMap> {
        if self.maze.file.is_empty() {
            Ok(MazeMap::default_maze())
        } else {
            MazeMap::load(Path::new(&self.maze.file))
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.paths.out_dir)
    }

    /// `env_override` (the environment variable's value) wins over the
    /// configured path.
    pub fn cache_file(&self, env_override: Option<&str>) -> PathBuf {
        match env_override.filter(|s| !s.is_empty()) {
            Some(p) => PathBuf::from(p),
            None if !self.paths.cache_file.is_empty() => PathBuf::from(&self.paths.cache_file),
            None => self.out_dir().join("gains.bin"),
        }
    }
}
