//! Command-line harness: data generation, training, planning, evaluation and
//! plotting, all driven by one TOML config plus `--set` overrides.

pub mod plot;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use gpdiff::config::{Config, LevelSection};
use gpdiff::denoiser::{load_checkpoint, save_checkpoint, train, Denoiser, TrainOutcome};
use gpdiff::evaluation::{run_ablation, sample_eval_tasks, velocity_mae, TrainedPlanner};
use gpdiff::hierarchy::{make_variant, PlanOutput, Planner, PlannerContext, Variant};
use gpdiff::maze::{collision_free, generate_dataset, Dataset, MazeMap, NormStats, TaskSpec};
use gpdiff::rng::{derive_seed, seeded};
use gpdiff::structured_prior::GainCache;
use gpdiff::Trajectory;

/// Environment variable that relocates the gain-cache file.
pub const CACHE_ENV: &str = "GPDIFF_CACHE_FILE";

#[derive(Debug, Parser)]
#[command(name = "gpdiff", version, about = "Hierarchical diffusion planner with a GP-conditioned noise prior")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; omitted sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set lower.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Upper,
    Lower,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate expert demonstrations and write the dataset and maze files.
    GenData,
    /// Train one level; the lower level needs `--variant`.
    Train {
        #[arg(long, value_enum)]
        level: Level,
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Plan one task with a trained variant and write the result as JSON.
    Plan {
        #[arg(long)]
        variant: Variant,
        /// Start position `x,y`; use with `--goal`.
        #[arg(long, value_parser = parse_point, requires = "goal", conflicts_with = "episode")]
        start: Option<[f64; 2]>,
        #[arg(long, value_parser = parse_point, requires = "start")]
        goal: Option<[f64; 2]>,
        /// Plan evaluation task `k` instead of an explicit start and goal.
        #[arg(long)]
        episode: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep denoising snapshots for plotting.
        #[arg(long)]
        snapshots: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate all four variants on the paired task list.
    Eval,
    /// Render a plan file or an expert demonstration to SVG.
    Plot {
        #[arg(long, conflicts_with = "expert")]
        plan: Option<PathBuf>,
        /// Index of a dataset trajectory.
        #[arg(long)]
        expert: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => Ok([
            x.parse().map_err(|e| format!("bad x {x:?}: {e}"))?,
            y.parse().map_err(|e| format!("bad y {y:?}: {e}"))?,
        ]),
        _ => Err(format!("expected x,y, got {s:?}")),
    }
}

/// A failed command and its exit code class.
#[derive(Debug)]
pub enum Failure {
    /// Bad usage, config, or missing inputs (exit code 1).
    Usage(String),
    /// The computation itself failed (exit code 2).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn usage(e: impl fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Runtime(m) => write!(f, "failed: {m}"),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// File locations derived from the config.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out_dir: PathBuf,
    pub cache: PathBuf,
}

impl Layout {
    pub fn new(config: &Config, env_cache: Option<&str>) -> Self {
        Layout { out_dir: config.out_dir(), cache: config.cache_file(env_cache) }
    }

    pub fn dataset(&self) -> PathBuf {
        self.out_dir.join("dataset.bin")
    }

    pub fn maze(&self) -> PathBuf {
        self.out_dir.join("maze.txt")
    }

    pub fn resolved_config(&self) -> PathBuf {
        self.out_dir.join("config.toml")
    }

    pub fn checkpoint(&self, level: Level, variant: Option<Variant>) -> PathBuf {
        match (level, variant) {
            (Level::Upper, _) => self.out_dir.join("upper.ckpt"),
            (Level::Lower, Some(v)) => self.out_dir.join(format!("lower_{v}.ckpt")),
            (Level::Lower, None) => self.out_dir.join("lower.ckpt"),
        }
    }

    pub fn loss_csv(&self, level: Level, variant: Option<Variant>) -> PathBuf {
        match (level, variant) {
            (Level::Upper, _) => self.out_dir.join("loss_upper.csv"),
            (Level::Lower, Some(v)) => self.out_dir.join(format!("loss_lower_{v}.csv")),
            (Level::Lower, None) => self.out_dir.join("loss_lower.csv"),
        }
    }

    pub fn plan(&self, variant: Variant) -> PathBuf {
        self.out_dir.join(format!("plan_{variant}.json"))
    }

    pub fn eval_table(&self) -> PathBuf {
        self.out_dir.join("eval_table.txt")
    }

    pub fn eval_summary(&self) -> PathBuf {
        self.out_dir.join("eval_summary.csv")
    }

    pub fn eval_episodes(&self) -> PathBuf {
        self.out_dir.join("eval_episodes.csv")
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let env_cache = std::env::var(CACHE_ENV).ok();
    match run(&cli, env_cache.as_deref()) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

pub fn run(cli: &Cli, env_cache: Option<&str>) -> CmdResult {
    if let Some(p) = &cli.global.config {
        if !p.is_file() {
            return Err(Failure::Usage(format!("config file {} not found", p.display())));
        }
    }
    let config = Config::load(cli.global.config.as_deref(), &cli.global.overrides).map_err(Failure::usage)?;
    if !config.maze.file.is_empty() && !Path::new(&config.maze.file).is_file() {
        return Err(Failure::Usage(format!("maze file {} not found", config.maze.file)));
    }
    let layout = Layout::new(&config, env_cache);
    match &cli.command {
        Command::GenData => cmd_gen_data(&config, &layout),
        Command::Train { level, variant } => cmd_train(&config, &layout, *level, *variant),
        Command::Plan { variant, start, goal, episode, seed, snapshots, out } => {
            let target = match (start, goal, episode) {
                (Some(s), Some(g), None) => PlanTarget::Explicit(*s, *g),
                (None, None, Some(k)) => PlanTarget::Episode(*k),
                (None, None, None) => PlanTarget::Episode(0),
                _ => return Err(Failure::Usage("give either --start and --goal or --episode".into())),
            };
            cmd_plan(&config, &layout, *variant, target, *seed, *snapshots, out.as_deref())
        }
        Command::Eval => cmd_eval(&config, &layout),
        Command::Plot { plan, expert, out } => cmd_plot(&layout, plan.as_deref(), *expert, out.as_deref()),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn ensure_out_dir(layout: &Layout) -> CmdResult {
    fs::create_dir_all(&layout.out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", layout.out_dir.display())))
}

fn require(path: &Path, what: &str, hint: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} not found; run `{hint}` first", path.display())))
    }
}

pub fn cmd_gen_data(config: &Config, layout: &Layout) -> CmdResult {
    ensure_out_dir(layout)?;
    let map = config.load_map().map_err(Failure::usage)?;
    let data = generate_dataset(&map, &config.dataset_config(), config.data.seed).map_err(Failure::runtime)?;
    let clean = data.trajectories.iter().filter(|t| collision_free(&map, t)).count();
    data.save(&layout.dataset()).map_err(Failure::runtime)?;
    map.save(&layout.maze()).map_err(Failure::runtime)?;
    write(&layout.resolved_config(), config.to_toml())?;
    println!(
        "wrote {} trajectories (horizon {}, dt {}) to {}",
        data.len(),
        data.horizon(),
        data.dt,
        layout.dataset().display()
    );
    println!(
        "collision check: {clean}/{} pass ({:.1}%)",
        data.len(),
        100.0 * clean as f64 / data.len() as f64
    );
    if clean != data.len() {
        return Err(Failure::Runtime("generated data contains colliding trajectories".into()));
    }
    Ok(())
}

/// Dataset and maze written by `gen-data`, checked against the config.
pub fn load_inputs(config: &Config, layout: &Layout) -> CmdResult<(MazeMap, Dataset)> {
    require(&layout.dataset(), "dataset", "gpdiff gen-data")?;
    require(&layout.maze(), "maze file", "gpdiff gen-data")?;
    let data = Dataset::load(&layout.dataset()).map_err(Failure::usage)?;
    let map = MazeMap::load(&layout.maze()).map_err(Failure::usage)?;
    if data.horizon() != config.data.horizon || data.dt != config.data.dt {
        return Err(Failure::Usage(format!(
            "dataset has horizon {} and dt {}, config expects {} and {}",
            data.horizon(),
            data.dt,
            config.data.horizon,
            config.data.dt
        )));
    }
    Ok((map, data))
}

pub fn context(config: &Config, stats: NormStats) -> gpdiff::Result<PlannerContext> {
    PlannerContext::new(config.ltv_model()?, stats, config.waypoint_spec()?, config.variances(), config.schedule()?)
}

fn load_cache(layout: &Layout) -> CmdResult<(GainCache, usize)> {
    let cache = GainCache::new();
    let loaded = cache.load_into(&layout.cache).map_err(Failure::usage)?;
    Ok((cache, loaded))
}

fn save_cache(layout: &Layout, cache: &GainCache, loaded: usize) -> CmdResult {
    if cache.len() > loaded {
        if let Some(parent) = layout.cache.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("creating {}: {e}", parent.display())))?;
        }
        cache.save(&layout.cache).map_err(Failure::runtime)?;
    }
    Ok(())
}

fn stats_json(stats: &NormStats) -> serde_json::Value {
    json!({ "offset": stats.offset, "scale": stats.scale })
}

fn train_level(
    section: &LevelSection,
    model: Denoiser,
    set: &gpdiff::denoiser::TrainingSet,
    ctx: &PlannerContext,
) -> CmdResult<TrainOutcome> {
    let mut rng = seeded(derive_seed(section.seed, 1));
    train(model, set, &section.train_config(), &ctx.sched, &mut rng, |r| {
        println!("step {:>6}  loss {:.6}", r.step, r.mean_loss)
    })
    .map_err(Failure::runtime)
}

pub fn cmd_train(config: &Config, layout: &Layout, level: Level, variant: Option<Variant>) -> CmdResult {
    let (_, data) = load_inputs(config, layout)?;
    let ctx = context(config, data.stats.clone()).map_err(Failure::usage)?;
    let (section, variant) = match (level, variant) {
        (Level::Upper, None) => (&config.upper, None),
        (Level::Upper, Some(_)) => return Err(Failure::Usage("the upper level is shared; drop --variant".into())),
        (Level::Lower, Some(v)) => (&config.lower, Some(v)),
        (Level::Lower, None) => return Err(Failure::Usage("training the lower level needs --variant".into())),
    };
    let (cache, loaded) = load_cache(layout)?;
    let mut init_rng = seeded(derive_seed(section.seed, 0));
    let (model, set) = match variant {
        None => {
            let cfg = section.apply(ctx.upper_config(section.hidden_dim, section.hidden_layers));
            (Denoiser::new(cfg, &mut init_rng), ctx.upper_training_set(&data).map_err(Failure::runtime)?)
        }
        Some(v) => {
            let spec = make_variant(v);
            let cfg = section.apply(ctx.lower_config(&spec, section.hidden_dim, section.hidden_layers));
            (Denoiser::new(cfg, &mut init_rng), ctx.lower_training_set(&spec, &data, &cache).map_err(Failure::runtime)?)
        }
    };
    let name = variant.map_or("upper".to_string(), |v| v.to_string());
    println!("training {name}: {} examples, {} parameters, {} steps", set.len(), model.num_params(), section.steps);
    let outcome = train_level(section, model, &set, &ctx)?;

    let mut csv = String::from("step,loss\n");
    for (k, l) in outcome.step_losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", k + 1, l));
    }
    write(&layout.loss_csv(level, variant), csv)?;
    let metadata = json!({
        "level": if variant.is_some() { "lower" } else { "upper" },
        "variant": variant.map(|v| v.to_string()),
        "train_steps": section.steps,
        "final_loss": outcome.step_losses.last(),
        "stats": stats_json(&data.stats),
        "config": config.to_toml(),
    });
    let path = layout.checkpoint(level, variant);
    save_checkpoint(&path, &outcome.model, &metadata).map_err(Failure::runtime)?;
    println!("wrote {}", path.display());
    if variant.is_some_and(|v| make_variant(v).prior != gpdiff::hierarchy::PriorKind::Isotropic) {
        let s = cache.stats();
        println!("gain cache: {} hits, {} misses, {} entries", s.hits, s.misses, s.entries);
    }
    save_cache(layout, &cache, loaded)
}

/// A checkpoint with the bookkeeping stored next to its weights.
pub struct LoadedModel {
    pub model: Denoiser,
    pub train_steps: usize,
    pub stats: NormStats,
}

pub fn load_model(path: &Path) -> CmdResult<LoadedModel> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("checkpoint {} not found; train it first", path.display())));
    }
    let (model, meta) = load_checkpoint(path).map_err(Failure::usage)?;
    let bad = || Failure::Usage(format!("checkpoint {} has malformed metadata", path.display()));
    let train_steps = meta["train_steps"].as_u64().ok_or_else(bad)? as usize;
    let stats: NormStats = serde_json::from_value(meta["stats"].clone()).map_err(|_| bad())?;
    Ok(LoadedModel { model, train_steps, stats })
}

fn check_stats(a: &NormStats, b: &NormStats, what: &Path) -> CmdResult {
    if a == b {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} was trained on different data", what.display())))
    }
}

/// Which task to plan.
#[derive(Debug, Clone, Copy)]
pub enum PlanTarget {
    Explicit([f64; 2], [f64; 2]),
    Episode(usize),
}

/// On-disk form of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub variant: Variant,
    pub seed: u64,
    pub task: TaskSpec,
    pub dt: f64,
    pub waypoints: Option<Vec<Vec<f64>>>,
    pub trajectory: Vec<Vec<f64>>,
    pub snapshots: Vec<(usize, Vec<Vec<f64>>)>,
    pub velocity_mae: f64,
    pub collision_free: bool,
}

fn rows(t: &Trajectory) -> Vec<Vec<f64>> {
    t.states().map(<[f64]>::to_vec).collect()
}

impl PlanFile {
    fn new(variant: Variant, seed: u64, task: TaskSpec, dt: f64, map: &MazeMap, out: &PlanOutput) -> Self {
        PlanFile {
            variant,
            seed,
            task,
            dt,
            waypoints: out.waypoints.clone(),
            trajectory: rows(&out.trajectory),
            snapshots: out.snapshots.iter().map(|(i, t)| (*i, rows(t))).collect(),
            velocity_mae: velocity_mae(&out.trajectory, dt),
            collision_free: collision_free(map, &out.trajectory),
        }
    }

    pub fn trajectory(&self) -> gpdiff::Result<Trajectory> {
        Trajectory::from_states(&self.trajectory)
    }
}

pub fn cmd_plan(
    config: &Config,
    layout: &Layout,
    variant: Variant,
    target: PlanTarget,
    seed: u64,
    snapshots: bool,
    out: Option<&Path>,
) -> CmdResult {
    require(&layout.maze(), "maze file", "gpdiff gen-data")?;
    let map = MazeMap::load(&layout.maze()).map_err(Failure::usage)?;
    let lower_path = layout.checkpoint(Level::Lower, Some(variant));
    let lower = load_model(&lower_path)?;
    let spec = make_variant(variant);
    let upper = if spec.needs_keystates() {
        let path = layout.checkpoint(Level::Upper, None);
        let u = load_model(&path)?;
        check_stats(&u.stats, &lower.stats, &path)?;
        Some(u)
    } else {
        None
    };
    let task = match target {
        PlanTarget::Explicit(s, g) => {
            let t = TaskSpec::new(s, g, &map.name);
            t.validate(&map).map_err(Failure::usage)?;
            t
        }
        PlanTarget::Episode(k) => {
            let tasks = sample_eval_tasks(&map, k + 1, config.eval.seed, config.eval.min_cell_distance)
                .map_err(Failure::runtime)?;
            tasks[k].clone()
        }
    };
    let ctx = context(config, lower.stats.clone()).map_err(Failure::usage)?;
    let (cache, loaded) = load_cache(layout)?;
    let planner = Planner::new(&ctx, variant, upper.as_ref().map(|u| &u.model), &lower.model, &cache).map_err(Failure::usage)?;
    let output = planner.plan(&task, &mut seeded(seed), snapshots).map_err(Failure::runtime)?;
    let file = PlanFile::new(variant, seed, task, config.data.dt, &map, &output);
    let path = out.map_or_else(|| layout.plan(variant), Path::to_path_buf);
    let text = serde_json::to_string_pretty(&file).map_err(Failure::runtime)?;
    write(&path, text + "\n")?;
    println!(
        "{variant}: goal {:?} reached at {:?}, collision-free {}, velocity MAE {:.4}",
        file.task.goal,
        &file.trajectory[file.trajectory.len() - 1][..2],
        file.collision_free,
        file.velocity_mae
    );
    println!("wrote {}", path.display());
    save_cache(layout, &cache, loaded)
}

pub fn cmd_eval(config: &Config, layout: &Layout) -> CmdResult {
    require(&layout.maze(), "maze file", "gpdiff gen-data")?;
    let map = MazeMap::load(&layout.maze()).map_err(Failure::usage)?;
    let upper_path = layout.checkpoint(Level::Upper, None);
    let upper = load_model(&upper_path)?;
    let mut lowers = Vec::new();
    for v in Variant::ALL {
        let path = layout.checkpoint(Level::Lower, Some(v));
        let m = load_model(&path)?;
        check_stats(&m.stats, &upper.stats, &path)?;
        lowers.push((v, m));
    }
    let ctx = context(config, upper.stats.clone()).map_err(Failure::usage)?;
    let (cache, loaded) = load_cache(layout)?;
    let mut planners = Vec::new();
    for (v, m) in &lowers {
        let planner = Planner::new(&ctx, *v, Some(&upper.model), &m.model, &cache).map_err(Failure::usage)?;
        planners.push(TrainedPlanner { planner, train_steps: m.train_steps });
    }
    let report = run_ablation(&map, &planners, &config.eval).map_err(|e| match e {
        gpdiff::Error::InvalidArgument(m) => Failure::Usage(m),
        other => Failure::runtime(other),
    })?;
    let table = report.to_table();
    print!("{table}");
    write(&layout.eval_table(), &table)?;
    write(&layout.eval_summary(), report.summary_csv())?;
    write(&layout.eval_episodes(), report.episodes_csv())?;
    println!("wrote {}, {}", layout.eval_summary().display(), layout.eval_episodes().display());
    save_cache(layout, &cache, loaded)
}

pub fn cmd_plot(layout: &Layout, plan: Option<&Path>, expert: Option<usize>, out: Option<&Path>) -> CmdResult {
    require(&layout.maze(), "maze file", "gpdiff gen-data")?;
    let map = MazeMap::load(&layout.maze()).map_err(Failure::usage)?;
    let (svg, default_name) = match (plan, expert) {
        (Some(p), None) => {
            require(p, "plan file", "gpdiff plan")?;
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("reading {}: {e}", p.display())))?;
            let file: PlanFile =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{} is not a plan file: {e}", p.display())))?;
            let traj = file.trajectory().map_err(Failure::usage)?;
            let snapshots: Vec<(usize, Trajectory)> = file
                .snapshots
                .iter()
                .map(|(i, s)| Trajectory::from_states(s).map(|t| (*i, t)))
                .collect::<Result<_, _>>()
                .map_err(Failure::usage)?;
            let waypoints = file.waypoints.clone().unwrap_or_default();
            let scene = plot::Scene {
                title: format!("{} seed {}", file.variant, file.seed),
                trajectory: Some(&traj),
                waypoints: &waypoints,
                snapshots: &snapshots,
                start: Some(file.task.start_pos),
                goal: Some(file.task.goal),
            };
            (plot::render_svg(&map, &scene), format!("plot_{}.svg", file.variant))
        }
        (None, Some(k)) => {
            require(&layout.dataset(), "dataset", "gpdiff gen-data")?;
            let data = Dataset::load(&layout.dataset()).map_err(Failure::usage)?;
            let traj = data
                .trajectories
                .get(k)
                .ok_or_else(|| Failure::Usage(format!("dataset has {} trajectories, no index {k}", data.len())))?;
            let task = &data.tasks[k];
            let scene = plot::Scene {
                title: format!("expert {k}"),
                trajectory: Some(traj),
                waypoints: &[],
                snapshots: &[],
                start: Some(task.start_pos),
                goal: Some(task.goal),
            };
            (plot::render_svg(&map, &scene), format!("expert_{k}.svg"))
        }
        _ => return Err(Failure::Usage("give exactly one of --plan or --expert".into())),
    };
    let path = out.map_or_else(|| layout.out_dir.join(default_name), Path::to_path_buf);
    write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}
