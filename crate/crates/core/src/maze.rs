//! Occupancy-grid mazes, collision checks, expert trajectories and tasks.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::trajectory::Trajectory;

pub const DEFAULT_MAZE_NAME: &str = "default7";

/// Built-in 7×7 maze: border walls plus three internal wall segments that
/// leave a loop, so many start/goal pairs have two distinct routes.
pub const DEFAULT_MAZE: &str = "\
#######
#.....#
#.###.#
#...#.#
###.#.#
#.....#
#######";

/// Boolean occupancy grid. Cell `(cx, cy)` covers
/// `[cx·s, (cx+1)·s) × [cy·s, (cy+1)·s)` in world units, where row `cy = 0`
/// is the first row of the text form.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeMap {
    pub name: String,
    width: usize,
    height: usize,
    occupied: Vec<bool>,
    pub cell_size: f64,
}

impl MazeMap {
    pub fn from_rows(name: &str, rows: &[&str], cell_size: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut occupied = Vec::with_capacity(width * height);
        for row in rows {
            if row.chars().count() != width {
                return Err(Error::format("maze", "rows have different lengths"));
            }
            for ch in row.chars() {
                occupied.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(Error::format("maze", format!("unexpected character {other:?}"))),
                });
            }
        }
        if !(cell_size > 0.0) {
            return Err(Error::format("maze", "cell_size must be positive"));
        }
        let map = MazeMap { name: name.to_string(), width, height, occupied, cell_size };
        for cx in 0..width {
            for cy in 0..height {
                let border = cx == 0 || cy == 0 || cx + 1 == width || cy + 1 == height;
                if border && !map.is_occupied(cx, cy) {
                    return Err(Error::format("maze", format!("border cell ({cx}, {cy}) is free")));
                }
            }
        }
        if map.free_cells().len() < 2 {
            return Err(Error::format("maze", "fewer than two free cells"));
        }
        Ok(map)
    }

    pub fn default_maze() -> Self {
        let rows: Vec<&str> = DEFAULT_MAZE.lines().collect();
        MazeMap::from_rows(DEFAULT_MAZE_NAME, &rows, 1.0).expect("built-in maze is valid")
    }

    /// Parse the text format: a `cell_size <value>` header, then `#`/`.` rows.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::format("maze", "empty file"))?;
        let cell_size = header
            .strip_prefix("cell_size")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::format("maze", format!("bad header {header:?}")))?;
        let rows: Vec<&str> = lines.collect();
        MazeMap::from_rows(name, &rows, cell_size)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("cell_size {}\n", self.cell_size);
        for cy in 0..self.height {
            for cx in 0..self.width {
                s.push(if self.is_occupied(cx, cy) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(DEFAULT_MAZE_NAME);
        MazeMap::parse(name, &text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// World extent `(x_max, y_max)`; the lower bounds are zero.
    pub fn world_size(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.occupied[cy * self.width + cx]
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for cy in 0..self.height {
            for cx in 0..self.width {
                if !self.is_occupied(cx, cy) {
                    cells.push((cx, cy));
                }
            }
        }
        cells
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let (wx, wy) = self.world_size();
        if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < wx && p[1] < wy) {
            return None;
        }
        Some(((p[0] / self.cell_size) as usize, (p[1] / self.cell_size) as usize))
    }

    pub fn cell_center(&self, cell: (usize, usize)) -> [f64; 2] {
        [(cell.0 as f64 + 0.5) * self.cell_size, (cell.1 as f64 + 0.5) * self.cell_size]
    }

    /// Points outside the map count as occupied.
    pub fn is_free_point(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_some_and(|(cx, cy)| !self.is_occupied(cx, cy))
    }

    /// Check the straight segment `a → b` at sub-steps of at most `max_step`.
    pub fn segment_free(&self, a: [f64; 2], b: [f64; 2], max_step: f64) -> bool {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = ((len / max_step).ceil() as usize).max(1);
        (0..=n).all(|k| {
            let s = k as f64 / n as f64;
            self.is_free_point([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])])
        })
    }

    fn neighbors(&self, (cx, cy): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cand = [
            (cx.wrapping_sub(1), cy),
            (cx + 1, cy),
            (cx, cy.wrapping_sub(1)),
            (cx, cy + 1),
        ];
        cand.into_iter()
            .filter(move |&(x, y)| x < self.width && y < self.height && !self.is_occupied(x, y))
    }
}

/// Every consecutive pair of positions is joined by a segment that stays in
/// free cells, checked at sub-steps of at most a quarter cell.
pub fn collision_free(map: &MazeMap, traj: &Trajectory) -> bool {
    let step = map.cell_size / 4.0;
    let pos = |t: usize| [traj.get(t, 0), traj.get(t, 1)];
    match traj.horizon() {
        0 => true,
        1 => map.is_free_point(pos(0)),
        h => (0..h - 1).all(|t| map.segment_free(pos(t), pos(t + 1), step)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub start_pos: [f64; 2],
    pub start_vel: [f64; 2],
    pub goal: [f64; 2],
    pub maze: String,
}

impl TaskSpec {
    pub fn new(start_pos: [f64; 2], goal: [f64; 2], maze: &str) -> Self {
        TaskSpec { start_pos, start_vel: [0.0, 0.0], goal, maze: maze.to_string() }
    }

    pub fn start_state(&self) -> [f64; 4] {
        [self.start_pos[0], self.start_pos[1], self.start_vel[0], self.start_vel[1]]
    }

    pub fn validate(&self, map: &MazeMap) -> Result<()> {
        if !map.is_free_point(self.start_pos) || !map.is_free_point(self.goal) {
            return Err(Error::InvalidArgument(format!(
                "start {:?} or goal {:?} is not in free space of maze {}",
                self.start_pos, self.goal, map.name
            )));
        }
        Ok(())
    }
}

/// Uniform start/goal cells at Manhattan cell distance `>= min_cell_distance`.
pub fn sample_task<R: Rng + ?Sized>(map: &MazeMap, min_cell_distance: usize, rng: &mut R) -> Result<TaskSpec> {
    let free = map.free_cells();
    let far_enough = |a: (usize, usize), b: (usize, usize)| a.0.abs_diff(b.0) + a.1.abs_diff(b.1) >= min_cell_distance.max(1);
    let feasible = free.iter().any(|&a| free.iter().any(|&b| far_enough(a, b)));
    if !feasible {
        return Err(Error::InvalidArgument(format!(
            "no pair of free cells at distance >= {min_cell_distance}"
        )));
    }
    loop {
        let a = free[rng.random_range(0..free.len())];
        let b = free[rng.random_range(0..free.len())];
        if far_enough(a, b) {
            return Ok(TaskSpec::new(map.cell_center(a), map.cell_center(b), &map.name));
        }
    }
}

/// Shortest 4-connected cell path; ties between equal-length routes are
/// broken randomly so repeated calls can produce different routes.
pub fn astar<R: Rng + ?Sized>(
    map: &MazeMap,
    start: (usize, usize),
    goal: (usize, usize),
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let idx = |c: (usize, usize)| c.1 * map.width + c.0;
    let h = |c: (usize, usize)| c.0.abs_diff(goal.0) + c.1.abs_diff(goal.1);
    let n = map.width * map.height;
    let mut g = vec![usize::MAX; n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0;
    open.push(Reverse((h(start), rng.random::<u32>(), start)));
    while let Some(Reverse((_, _, cell))) = open.pop() {
        if closed[idx(cell)] {
            continue;
        }
        closed[idx(cell)] = true;
        if cell == goal {
            let mut path = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        let mut next: Vec<_> = map.neighbors(cell).collect();
        next.shuffle(rng);
        for nb in next {
            let cand = g[idx(cell)] + 1;
            if cand < g[idx(nb)] {
                g[idx(nb)] = cand;
                parent[idx(nb)] = Some(cell);
                open.push(Reverse((cand + h(nb), rng.random::<u32>(), nb)));
            }
        }
    }
    Err(Error::Unreachable { start, goal })
}

fn polyline_point(points: &[[f64; 2]], cumulative: &[f64], s: f64) -> [f64; 2] {
    let k = cumulative.partition_point(|&c| c < s).clamp(1, points.len() - 1);
    let seg = cumulative[k] - cumulative[k - 1];
    let u = if seg > 0.0 { ((s - cumulative[k - 1]) / seg).clamp(0.0, 1.0) } else { 0.0 };
    let (a, b) = (points[k - 1], points[k]);
    [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
}

fn with_finite_difference_velocities(positions: &[[f64; 2]], dt: f64) -> Trajectory {
    let h = positions.len();
    let states: Vec<Vec<f64>> = (0..h)
        .map(|t| {
            let v = if t + 1 < h {
                [(positions[t + 1][0] - positions[t][0]) / dt, (positions[t + 1][1] - positions[t][1]) / dt]
            } else {
                [0.0, 0.0]
            };
            vec![positions[t][0], positions[t][1], v[0], v[1]]
        })
        .collect();
    Trajectory::from_states(&states).expect("states have equal length")
}

/// Expert demonstration: A* route, arc-length re-timing with a smooth-step
/// speed profile, light smoothing (kept only if still collision-free) and
/// finite-difference velocities (`v_t = (p_{t+1} − p_t)/dt`, zero at the end).
pub fn generate_expert<R: Rng + ?Sized>(
    map: &MazeMap,
    task: &TaskSpec,
    horizon: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    task.validate(map)?;
    if horizon < 2 {
        return Err(Error::InvalidArgument("horizon must be >= 2".into()));
    }
    let start = map.cell_of(task.start_pos).expect("validated");
    let goal = map.cell_of(task.goal).expect("validated");
    let cells = astar(map, start, goal, rng)?;

    let mut points = vec![task.start_pos];
    points.extend(cells.iter().skip(1).take(cells.len().saturating_sub(2)).map(|&c| map.cell_center(c)));
    points.push(task.goal);
    points.dedup();
    // Drop interior points on straight runs; corners remain.
    let mut corners: Vec<[f64; 2]> = vec![points[0]];
    for k in 1..points.len() {
        if k + 1 < points.len() {
            let (a, b, c) = (corners[corners.len() - 1], points[k], points[k + 1]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross.abs() < 1e-12 {
                continue;
            }
        }
        corners.push(points[k]);
    }

    let mut cumulative = vec![0.0];
    for w in corners.windows(2) {
        let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cumulative.push(cumulative.last().unwrap() + len);
    }
    let total = *cumulative.last().unwrap();
    let raw: Vec<[f64; 2]> = (0..horizon)
        .map(|t| {
            if corners.len() == 1 || total == 0.0 {
                return corners[0];
            }
            let u = t as f64 / (horizon - 1) as f64;
            polyline_point(&corners, &cumulative, total * u * u * (3.0 - 2.0 * u))
        })
        .collect();

    let radius = 2usize;
    let smoothed: Vec<[f64; 2]> = (0..horizon)
        .map(|t| {
            let r = radius.min(t).min(horizon - 1 - t);
            let window = &raw[t - r..=t + r];
            let n = window.len() as f64;
            [window.iter().map(|p| p[0]).sum::<f64>() / n, window.iter().map(|p| p[1]).sum::<f64>() / n]
        })
        .collect();

    let candidate = with_finite_difference_velocities(&smoothed, dt);
    if collision_free(map, &candidate) {
        return Ok(candidate);
    }
    let fallback = with_finite_difference_velocities(&raw, dt);
    debug_assert!(collision_free(map, &fallback));
    Ok(fallback)
}

/// Per-dimension affine map `x ↦ (x − offset) / scale` onto roughly `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    pub fn identity(state_dim: usize) -> Self {
        NormStats { offset: vec![0.0; state_dim], scale: vec![1.0; state_dim] }
    }

    /// Midrange/half-range per dimension; constant dimensions map to themselves.
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit normalization on an empty dataset".into()))?;
        let d = first.state_dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for traj in trajectories {
            for state in traj.states() {
                for k in 0..d {
                    lo[k] = lo[k].min(state[k]);
                    hi[k] = hi[k].max(state[k]);
                }
            }
        }
        let mut stats = NormStats::identity(d);
        for k in 0..d {
            let half = 0.5 * (hi[k] - lo[k]);
            if half > 1e-12 {
                stats.offset[k] = 0.5 * (hi[k] + lo[k]);
                stats.scale[k] = half;
            }
        }
        Ok(stats)
    }

    pub fn normalize_value(&self, k: usize, v: f64) -> f64 {
        (v - self.offset[k]) / self.scale[k]
    }

    pub fn denormalize_value(&self, k: usize, v: f64) -> f64 {
        v * self.scale[k] + self.offset[k]
    }

    pub fn normalize(&self, traj: &Trajectory) -> Trajectory {
        self.map(traj, |k, v| self.normalize_value(k, v))
    }

    pub fn denormalize(&self, traj: &Trajectory) -> Trajectory {
        self.map(traj, |k, v| self.denormalize_value(k, v))
    }

    fn map(&self, traj: &Trajectory, f: impl Fn(usize, f64) -> f64) -> Trajectory {
        let d = traj.state_dim();
        let data = DVector::from_fn(traj.as_vector().len(), |r, _| f(r % d, traj.as_vector()[r]));
        Trajectory::new(traj.horizon(), d, data).expect("same shape")
    }
}

/// Expert trajectories (world units) with their tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub tasks: Vec<TaskSpec>,
    pub dt: f64,
    pub stats: NormStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    pub horizon: usize,
    pub dt: f64,
    pub min_cell_distance: usize,
    pub retry_budget: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { count: 2000, horizon: 64, dt: 0.1, min_cell_distance: 3, retry_budget: 100 }
    }
}

/// Generate `config.count` expert demonstrations; item `k` uses its own
/// generator seeded from `(seed, k)`.
pub fn generate_dataset(map: &MazeMap, config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    if config.count == 0 {
        return Err(Error::InvalidArgument("dataset count must be positive".into()));
    }
    let mut trajectories = Vec::with_capacity(config.count);
    let mut tasks = Vec::with_capacity(config.count);
    for k in 0..config.count {
        let mut rng = seeded(derive_seed(seed, k as u64));
        let mut attempt = 0;
        loop {
            let task = sample_task(map, config.min_cell_distance, &mut rng)?;
            match generate_expert(map, &task, config.horizon, config.dt, &mut rng) {
                Ok(traj) => {
                    trajectories.push(traj);
                    tasks.push(task);
                    break;
                }
                Err(Error::Unreachable { .. }) if attempt + 1 < config.retry_budget => attempt += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let stats = NormStats::fit(&trajectories)?;
    Ok(Dataset { trajectories, tasks, dt: config.dt, stats })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::horizon)
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::state_dim)
    }

    /// Copy with every trajectory mapped through `self.stats`.
    pub fn normalize(&self) -> Dataset {
        Dataset {
            trajectories: self.trajectories.iter().map(|t| self.stats.normalize(t)).collect(),
            tasks: self.tasks.clone(),
            dt: self.dt,
            stats: self.stats.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if is_binary_path(path) { self.to_binary() } else { self.to_text().into_bytes() };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_binary_path(path) {
            Dataset::from_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::format("dataset", e.to_string()))?;
            Dataset::parse_text(&text)
        }
    }

    /// Text form: a version line, a shape line, then per record a `task`
    /// line followed by `H` lines of `d` floats.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "gpdiff-dataset 1").unwrap();
        writeln!(s, "horizon {} state_dim {} dt {} count {}", self.horizon(), self.state_dim(), self.dt, self.len()).unwrap();
        for (task, traj) in self.tasks.iter().zip(&self.trajectories) {
            writeln!(
                s,
                "task {} {} {} {} {} {} {}",
                task.maze, task.start_pos[0], task.start_pos[1], task.start_vel[0], task.start_vel[1], task.goal[0], task.goal[1]
            )
            .unwrap();
            for state in traj.states() {
                let row: Vec<String> = state.iter().map(|v| v.to_string()).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Dataset> {
        let bad = |d: &str| Error::format("dataset", d.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("gpdiff-dataset 1") {
            return Err(bad("missing or unsupported version header"));
        }
        let shape: Vec<&str> = lines.next().ok_or_else(|| bad("missing shape line"))?.split_whitespace().collect();
        if shape.len() != 8 || shape[0] != "horizon" || shape[2] != "state_dim" || shape[4] != "dt" || shape[6] != "count" {
            return Err(bad("malformed shape line"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(&e.to_string()));
        let int = |s: &str| s.parse::<usize>().map_err(|e| bad(&e.to_string()));
        let (horizon, d, dt, count) = (int(shape[1])?, int(shape[3])?, num(shape[5])?, int(shape[7])?);
        let mut trajectories = Vec::with_capacity(count);
        let mut tasks = Vec::with_capacity(count);
        for _ in 0..count {
            let t: Vec<&str> = lines.next().ok_or_else(|| bad("truncated"))?.split_whitespace().collect();
            if t.len() != 8 || t[0] != "task" {
                return Err(bad("malformed task line"));
            }
            tasks.push(TaskSpec {
                maze: t[1].to_string(),
                start_pos: [num(t[2])?, num(t[3])?],
                start_vel: [num(t[4])?, num(t[5])?],
                goal: [num(t[6])?, num(t[7])?],
            });
            let mut data = Vec::with_capacity(horizon * d);
            for _ in 0..horizon {
                let row = lines.next().ok_or_else(|| bad("truncated"))?;
                let vals = row.split_whitespace().map(num).collect::<Result<Vec<_>>>()?;
                if vals.len() != d {
                    return Err(bad("state row has the wrong width"));
                }
                data.extend(vals);
            }
            trajectories.push(Trajectory::new(horizon, d, DVector::from_vec(data))?);
        }
        let stats = NormStats::fit(&trajectories)?;
        Ok(Dataset { trajectories, tasks, dt, stats })
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"GPDDATA\0");
        b.extend_from_slice(&1u32.to_le_bytes());
        for v in [self.horizon() as u64, self.state_dim() as u64] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.dt.to_le_bytes());
        b.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (task, traj) in self.tasks.iter().zip(&self.trajectories) {
            b.extend_from_slice(&(task.maze.len() as u64).to_le_bytes());
            b.extend_from_slice(task.maze.as_bytes());
            for v in task.start_pos.iter().chain(&task.start_vel).chain(&task.goal) {
                b.extend_from_slice(&v.to_le_bytes());
            }
            for v in traj.as_vector().iter() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Dataset> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| Error::format("dataset", "truncated binary file"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != b"GPDDATA\0" || u32::from_le_bytes(take(4)?.try_into().unwrap()) != 1 {
            return Err(Error::format("dataset", "bad binary header"));
        }
        let read_u64 = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let read_f64 = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let horizon = read_u64(take(8)?) as usize;
        let d = read_u64(take(8)?) as usize;
        let dt = read_f64(take(8)?);
        let count = read_u64(take(8)?) as usize;
        let mut trajectories = Vec::with_capacity(count);
        let mut tasks = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u64(take(8)?) as usize;
            let maze = String::from_utf8(take(name_len)?.to_vec()).map_err(|e| Error::format("dataset", e.to_string()))?;
            let mut t = [0.0; 6];
            for v in &mut t {
                *v = read_f64(take(8)?);
            }
            tasks.push(TaskSpec { maze, start_pos: [t[0], t[1]], start_vel: [t[2], t[3]], goal: [t[4], t[5]] });
            let data: Vec<f64> = take(horizon * d * 8)?.chunks_exact(8).map(read_f64).collect();
            trajectories.push(Trajectory::new(horizon, d, DVector::from_vec(data))?);
        }
        let stats = NormStats::fit(&trajectories)?;
        Ok(Dataset { trajectories, tasks, dt, stats })
    }
}

fn is_binary_path(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("bin")
}
