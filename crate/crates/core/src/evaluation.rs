//! Success and velocity-consistency metrics, and the paired ablation harness.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Planner, Variant};
use crate::maze::{collision_free, sample_task, MazeMap, TaskSpec};
use crate::rng::{derive_seed, seeded};
use crate::trajectory::Trajectory;

/// Final position within `tol` of the goal and no collisions on the way.
pub fn success(map: &MazeMap, traj: &Trajectory, task: &TaskSpec, tol: f64) -> bool {
    goal_distance(traj, task) <= tol && collision_free(map, traj)
}

pub fn goal_distance(traj: &Trajectory, task: &TaskSpec) -> f64 {
    let end = traj.position(traj.horizon() - 1);
    ((end[0] - task.goal[0]).powi(2) + (end[1] - task.goal[1]).powi(2)).sqrt()
}

/// Mean over `t < H−1` and coordinates of `|v_t − (p_{t+1} − p_t)/dt|`.
pub fn velocity_mae(traj: &Trajectory, dt: f64) -> f64 {
    let h = traj.horizon();
    let d_pos = traj.d_pos();
    if h < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for t in 0..h - 1 {
        for k in 0..d_pos {
            let fd = (traj.get(t + 1, k) - traj.get(t, k)) / dt;
            sum += (traj.get(t, d_pos + k) - fd).abs();
        }
    }
    sum / ((h - 1) * d_pos) as f64
}

/// Published reference values (successes per 100 tasks, velocity MAE).
pub fn reference_values(variant: Variant) -> (f64, f64) {
    match variant {
        Variant::IsoPlain => (36.0, 0.22),
        Variant::IsoCond => (42.0, 0.21),
        Variant::GpPlain => (14.0, 0.08),
        Variant::GpKeystates => (75.0, 0.08),
    }
}

/// The shared evaluation task list: task `k` comes from its own seed.
pub fn sample_eval_tasks(map: &MazeMap, episodes: usize, seed: u64, min_cell_distance: usize) -> Result<Vec<TaskSpec>> {
    (0..episodes)
        .map(|k| sample_task(map, min_cell_distance, &mut seeded(derive_seed(seed, k as u64))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub task: TaskSpec,
    pub success: bool,
    pub collision: bool,
    pub goal_distance: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub train_steps: usize,
    pub successes: usize,
    pub mean_mae: f64,
    pub records: Vec<EpisodeRecord>,
}

impl VariantResult {
    pub fn episodes(&self) -> usize {
        self.records.len()
    }

    /// Successes per 100 episodes.
    pub fn success_rate(&self) -> f64 {
        100.0 * self.successes as f64 / self.episodes().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub results: Vec<VariantResult>,
}

/// A planner with the number of optimization steps its lower level was
/// trained for.
#[derive(Debug, Clone, Copy)]
pub struct TrainedPlanner<'a> {
    pub planner: Planner<'a>,
    pub train_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Goal tolerance in cells.
    pub tolerance_cells: f64,
    pub seed: u64,
    pub min_cell_distance: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 100, tolerance_cells: 1.0, seed: 1234, min_cell_distance: 3 }
    }
}

/// Evaluate every planner on the same task list with the same per-episode
/// seeds. All planners must be distinct variants with one shared, nonzero
/// training budget.
pub fn run_ablation(map: &MazeMap, planners: &[TrainedPlanner<'_>], config: &EvalConfig) -> Result<EvalReport> {
    if planners.is_empty() || config.episodes == 0 {
        return Err(Error::InvalidArgument("ablation needs at least one planner and one episode".into()));
    }
    let budget = planners[0].train_steps;
    for (k, p) in planners.iter().enumerate() {
        if p.train_steps == 0 {
            return Err(Error::InvalidArgument(format!("variant {} is untrained", p.planner.variant.kind)));
        }
        if p.train_steps != budget {
            return Err(Error::InvalidArgument(format!(
                "unequal training budgets: {} has {} steps, {} has {budget}",
                p.planner.variant.kind, p.train_steps, planners[0].planner.variant.kind
            )));
        }
        if planners[..k].iter().any(|q| q.planner.variant.kind == p.planner.variant.kind) {
            return Err(Error::InvalidArgument(format!("variant {} listed twice", p.planner.variant.kind)));
        }
    }
    let tasks = sample_eval_tasks(map, config.episodes, config.seed, config.min_cell_distance)?;
    let tol = config.tolerance_cells * map.cell_size;
    let dt = planners[0].planner.ctx.model.dt;

    let mut results = Vec::with_capacity(planners.len());
    for p in planners {
        let mut records = Vec::with_capacity(tasks.len());
        for (episode, task) in tasks.iter().enumerate() {
            let mut rng = seeded(derive_seed(config.seed ^ 0x5eed, episode as u64));
            let traj = p.planner.plan(task, &mut rng, false)?.trajectory;
            let collision = !collision_free(map, &traj);
            let dist = goal_distance(&traj, task);
            records.push(EpisodeRecord {
                episode,
                task: task.clone(),
                success: dist <= tol && !collision,
                collision,
                goal_distance: dist,
                mae: velocity_mae(&traj, dt),
            });
        }
        let successes = records.iter().filter(|r| r.success).count();
        let mean_mae = records.iter().map(|r| r.mae).sum::<f64>() / records.len() as f64;
        results.push(VariantResult { variant: p.planner.variant.kind, train_steps: p.train_steps, successes, mean_mae, records });
    }
    results.sort_by_key(|r| r.variant);
    Ok(EvalReport { episodes: config.episodes, tolerance: tol, seed: config.seed, results })
}

impl EvalReport {
    pub fn result(&self, variant: Variant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == variant)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "episodes: {}  goal tolerance: {}  seed: {}", self.episodes, self.tolerance, self.seed).unwrap();
        writeln!(
            s,
            "{:<14} {:>8} {:>10} {:>12} {:>10} {:>12} {:>10}",
            "variant", "steps", "success", "success/100", "ref/100", "vel_mae", "ref_mae"
        )
        .unwrap();
        for r in &self.results {
            let (ref_success, ref_mae) = reference_values(r.variant);
            writeln!(
                s,
                "{:<14} {:>8} {:>10} {:>12.1} {:>10.0} {:>12.4} {:>10.2}",
                r.variant.name(),
                r.train_steps,
                format!("{}/{}", r.successes, r.episodes()),
                r.success_rate(),
                ref_success,
                r.mean_mae,
                ref_mae
            )
            .unwrap();
        }
        s
    }

    /// `variant,metric,value,reference` with two metrics per variant.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("variant,metric,value,reference\n");
        for r in &self.results {
            let (ref_success, ref_mae) = reference_values(r.variant);
            writeln!(s, "{},success_rate,{},{}", r.variant, r.success_rate(), ref_success).unwrap();
            writeln!(s, "{},velocity_mae,{},{}", r.variant, r.mean_mae, ref_mae).unwrap();
        }
        s
    }

    pub fn episodes_csv(&self) -> String {
        let mut s = String::from("variant,episode,start_x,start_y,goal_x,goal_y,success,collision,goal_distance,velocity_mae\n");
        for r in &self.results {
            for e in &r.records {
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.variant,
                    e.episode,
                    e.task.start_pos[0],
                    e.task.start_pos[1],
                    e.task.goal[0],
                    e.task.goal[1],
                    e.success,
                    e.collision,
                    e.goal_distance,
                    e.mae
                )
                .unwrap();
            }
        }
        s
    }
}
