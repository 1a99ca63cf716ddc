//! Two-level planner: an isotropic waypoint model proposes key states, and a
//! trajectory denoiser runs in the noise model those key states induce.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserConfig, TrainingSet};
use crate::diffusion::{reverse_step, NoiseSchedule};
use crate::error::{Error, Result};
use crate::gp_prior::{build_gp_prior, propagate_mean, GpPrior, LtvModel};
use crate::maze::{Dataset, NormStats, TaskSpec};
use crate::structured_prior::{GainCache, KeyStateObservation, ObservedSlice, StructuredPrior};
use crate::trajectory::Trajectory;

/// Fixed waypoint timings `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaypointSpec {
    pub n_waypoints: usize,
    pub horizon: usize,
    pub include_endpoints: bool,
}

impl WaypointSpec {
    pub fn new(n_waypoints: usize, horizon: usize, include_endpoints: bool) -> Result<Self> {
        let spec = WaypointSpec { n_waypoints, horizon, include_endpoints };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let min = if self.include_endpoints { 2 } else { 1 };
        if self.n_waypoints < min {
            return Err(Error::InvalidArgument(format!("need at least {min} waypoints")));
        }
        let steps = self.timesteps();
        if steps.windows(2).any(|w| w[1] <= w[0]) || steps.last().is_some_and(|&t| t >= self.horizon) {
            return Err(Error::InvalidArgument(format!(
                "{} waypoints do not fit strictly increasing in horizon {}",
                self.n_waypoints, self.horizon
            )));
        }
        Ok(())
    }

    /// With endpoints: `round_half_up(k (H−1) / (n−1))` for `k = 0..n`.
    /// Without: the `n` interior points of an even split of `(0, H−1)`.
    pub fn timesteps(&self) -> Vec<usize> {
        let last = self.horizon.saturating_sub(1) as f64;
        let (n, offset, denom) = if self.include_endpoints {
            (self.n_waypoints, 0, self.n_waypoints.saturating_sub(1).max(1))
        } else {
            (self.n_waypoints, 1, self.n_waypoints + 1)
        };
        (0..n)
            .map(|k| ((k + offset) as f64 * last / denom as f64 + 0.5).floor() as usize)
            .collect()
    }

    pub fn is_endpoint(&self, t: usize) -> bool {
        self.include_endpoints && (t == 0 || t + 1 == self.horizon)
    }
}

/// Diagonal observation variances by waypoint role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyStateVariances {
    pub endpoint: f64,
    pub interior: f64,
    /// Variance of the start-state observation used without key states.
    pub start: f64,
}

impl Default for KeyStateVariances {
    fn default() -> Self {
        KeyStateVariances { endpoint: 1e-6, interior: 1e-2, start: 1e-6 }
    }
}

/// Positions of `traj` at the waypoint timings.
pub fn extract_keystates(traj: &Trajectory, spec: &WaypointSpec, variances: &KeyStateVariances) -> Result<KeyStateObservation> {
    if traj.horizon() != spec.horizon {
        return Err(Error::ShapeMismatch { expected: spec.horizon, actual: traj.horizon() });
    }
    let d_pos = traj.d_pos();
    let steps = spec.timesteps();
    let y = DVector::from_iterator(steps.len() * d_pos, steps.iter().flat_map(|&t| traj.position(t).to_vec()));
    Ok(observation_at(&steps, y, d_pos, spec, variances))
}

fn observation_at(
    steps: &[usize],
    y: DVector<f64>,
    d_pos: usize,
    spec: &WaypointSpec,
    variances: &KeyStateVariances,
) -> KeyStateObservation {
    let indices = steps
        .iter()
        .map(|&t| ObservedSlice { timestep: t, coord_start: 0, coord_len: d_pos })
        .collect();
    let var: Vec<f64> = steps
        .iter()
        .flat_map(|&t| {
            let v = if spec.is_endpoint(t) { variances.endpoint } else { variances.interior };
            std::iter::repeat_n(v, d_pos)
        })
        .collect();
    KeyStateObservation::with_variances(y, indices, &var)
}

/// The four ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    IsoPlain,
    IsoCond,
    GpPlain,
    GpKeystates,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::IsoPlain, Variant::IsoCond, Variant::GpPlain, Variant::GpKeystates];

    pub fn name(self) -> &'static str {
        match self {
            Variant::IsoPlain => "iso_plain",
            Variant::IsoCond => "iso_cond",
            Variant::GpPlain => "gp_plain",
            Variant::GpKeystates => "gp_keystates",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `μ = 0`, `K = I`.
    Isotropic,
    /// GP conditioned on the start state.
    GpStart,
    /// GP conditioned on the key states.
    GpKeystates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub kind: Variant,
    pub prior: PriorKind,
    /// The denoiser sees `(Y, C)`.
    pub conditioned: bool,
    /// Overwrite start and goal states after every reverse step.
    pub inpaint: bool,
}

impl VariantSpec {
    pub fn needs_keystates(&self) -> bool {
        self.conditioned || self.prior == PriorKind::GpKeystates
    }
}

pub fn make_variant(kind: Variant) -> VariantSpec {
    let (prior, conditioned, inpaint) = match kind {
        Variant::IsoPlain => (PriorKind::Isotropic, false, true),
        Variant::IsoCond => (PriorKind::Isotropic, true, true),
        Variant::GpPlain => (PriorKind::GpStart, false, false),
        Variant::GpKeystates => (PriorKind::GpKeystates, true, false),
    };
    VariantSpec { kind, prior, conditioned, inpaint }
}

/// Everything shared by the planners of one experiment: the normalization,
/// the GP kernel in normalized coordinates, waypoint timings and schedule.
#[derive(Debug, Clone)]
pub struct PlannerContext {
    pub model: LtvModel,
    pub stats: NormStats,
    pub waypoints: WaypointSpec,
    pub variances: KeyStateVariances,
    pub sched: NoiseSchedule,
    gp: GpPrior,
    iso: StructuredPrior,
    iso_upper: StructuredPrior,
}

impl PlannerContext {
    pub fn new(
        model: LtvModel,
        stats: NormStats,
        waypoints: WaypointSpec,
        variances: KeyStateVariances,
        sched: NoiseSchedule,
    ) -> Result<Self> {
        waypoints.validate()?;
        let d = model.state_dim();
        if stats.offset.len() != d {
            return Err(Error::ShapeMismatch { expected: d, actual: stats.offset.len() });
        }
        let gp = build_gp_prior(&model, waypoints.horizon)?.normalized(&stats.offset, &stats.scale)?;
        Ok(PlannerContext {
            iso: StructuredPrior::isotropic(waypoints.horizon, d),
            iso_upper: StructuredPrior::isotropic(waypoints.n_waypoints, model.d_pos),
            model,
            stats,
            waypoints,
            variances,
            sched,
            gp,
        })
    }

    pub fn horizon(&self) -> usize {
        self.waypoints.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn d_pos(&self) -> usize {
        self.model.d_pos
    }

    /// Normalized GP kernel with mean `Φ^t x₀` for the task's start state.
    pub fn task_gp(&self, task: &TaskSpec) -> Result<GpPrior> {
        let x0 = DVector::from_column_slice(&task.start_state());
        let world = propagate_mean(&self.model, self.horizon(), &x0);
        let d = self.state_dim();
        let mean = DVector::from_fn(world.len(), |r, _| self.stats.normalize_value(r % d, world[r]));
        self.gp.with_mean(mean)
    }

    fn normalized_start(&self, task: &TaskSpec) -> Vec<f64> {
        task.start_state().iter().enumerate().map(|(k, &v)| self.stats.normalize_value(k, v)).collect()
    }

    fn normalized_goal_state(&self, task: &TaskSpec) -> Vec<f64> {
        let d_pos = self.d_pos();
        (0..self.state_dim())
            .map(|k| {
                let world = if k < d_pos { task.goal[k] } else { 0.0 };
                self.stats.normalize_value(k, world)
            })
            .collect()
    }

    /// Tight observation of the full start state, in normalized units.
    pub fn start_observation(&self, task: &TaskSpec) -> KeyStateObservation {
        let d = self.state_dim();
        KeyStateObservation::with_variances(
            DVector::from_vec(self.normalized_start(task)),
            vec![ObservedSlice { timestep: 0, coord_start: 0, coord_len: d }],
            &vec![self.variances.start; d],
        )
    }

    /// Key states from a normalized trajectory.
    pub fn keystates(&self, normalized: &Trajectory) -> Result<KeyStateObservation> {
        extract_keystates(normalized, &self.waypoints, &self.variances)
    }

    /// Key-state observation from a flat normalized waypoint vector.
    pub fn observation_from_waypoints(&self, y: DVector<f64>) -> Result<KeyStateObservation> {
        let expected = self.waypoints.n_waypoints * self.d_pos();
        if y.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: y.len() });
        }
        Ok(observation_at(&self.waypoints.timesteps(), y, self.d_pos(), &self.waypoints, &self.variances))
    }

    /// Waypoints of `obs` back in world coordinates.
    pub fn waypoints_world(&self, obs: &KeyStateObservation) -> Vec<Vec<f64>> {
        let d_pos = self.d_pos();
        obs.y
            .as_slice()
            .chunks(d_pos)
            .map(|c| c.iter().enumerate().map(|(k, &v)| self.stats.denormalize_value(k, v)).collect())
            .collect()
    }

    /// Conditioning vector of the lower denoiser: flattened `Y` plus a
    /// per-timestep key-state mask. Empty for unconditioned variants.
    pub fn lower_cond(&self, variant: &VariantSpec, obs: Option<&KeyStateObservation>) -> Result<DVector<f64>> {
        if !variant.conditioned {
            return Ok(DVector::zeros(0));
        }
        let obs = obs.ok_or_else(|| Error::InvalidArgument(format!("{} needs key states", variant.kind)))?;
        let m = self.waypoints.n_waypoints * self.d_pos();
        let mut cond = DVector::zeros(m + self.horizon());
        cond.rows_mut(0, obs.y.len().min(m)).copy_from(&obs.y.rows(0, obs.y.len().min(m)));
        for s in &obs.indices {
            cond[m + s.timestep] = 1.0;
        }
        Ok(cond)
    }

    pub fn lower_cond_dim(&self, variant: &VariantSpec) -> usize {
        if variant.conditioned {
            self.waypoints.n_waypoints * self.d_pos() + self.horizon()
        } else {
            0
        }
    }

    /// Noise model `N(μ, K)` of the lower level for one task.
    pub fn lower_prior(
        &self,
        variant: &VariantSpec,
        task: &TaskSpec,
        obs: Option<&KeyStateObservation>,
        cache: &GainCache,
    ) -> Result<StructuredPrior> {
        match variant.prior {
            PriorKind::Isotropic => Ok(self.iso.clone()),
            PriorKind::GpStart => cache.get_or_compute(&self.task_gp(task)?, &self.start_observation(task)),
            PriorKind::GpKeystates => {
                let obs = obs.ok_or_else(|| Error::InvalidArgument(format!("{} needs key states", variant.kind)))?;
                cache.get_or_compute(&self.task_gp(task)?, obs)
            }
        }
    }

    /// Normalized start and goal positions, the upper level's conditioning.
    pub fn upper_cond(&self, task: &TaskSpec) -> DVector<f64> {
        let d_pos = self.d_pos();
        let start = self.normalized_start(task);
        let goal = self.normalized_goal_state(task);
        DVector::from_iterator(2 * d_pos, start[..d_pos].iter().chain(&goal[..d_pos]).copied())
    }

    pub fn upper_prior(&self) -> &StructuredPrior {
        &self.iso_upper
    }

    pub fn upper_config(&self, hidden_dim: usize, hidden_layers: usize) -> DenoiserConfig {
        let mut cfg = DenoiserConfig::new(self.waypoints.n_waypoints * self.d_pos(), 2 * self.d_pos());
        cfg.hidden_dim = hidden_dim;
        cfg.hidden_layers = hidden_layers;
        cfg
    }

    pub fn lower_config(&self, variant: &VariantSpec, hidden_dim: usize, hidden_layers: usize) -> DenoiserConfig {
        let mut cfg = DenoiserConfig::new(self.horizon() * self.state_dim(), self.lower_cond_dim(variant));
        cfg.hidden_dim = hidden_dim;
        cfg.hidden_layers = hidden_layers;
        cfg
    }

    /// Upper-level examples: ground-truth waypoints given start and goal.
    pub fn upper_training_set(&self, dataset: &Dataset) -> Result<TrainingSet> {
        let mut set = TrainingSet::default();
        for (traj, task) in dataset.trajectories.iter().zip(&dataset.tasks) {
            let obs = self.keystates(&self.stats.normalize(traj))?;
            set.push(obs.y, self.iso_upper.clone(), self.upper_cond(task));
        }
        Ok(set)
    }

    /// Lower-level examples for `variant`; every prior is built from the
    /// example's own ground-truth key states.
    pub fn lower_training_set(&self, variant: &VariantSpec, dataset: &Dataset, cache: &GainCache) -> Result<TrainingSet> {
        let mut set = TrainingSet::default();
        for (traj, task) in dataset.trajectories.iter().zip(&dataset.tasks) {
            let normalized = self.stats.normalize(traj);
            let obs = self.keystates(&normalized)?;
            let prior = self.lower_prior(variant, task, Some(&obs), cache)?;
            let cond = self.lower_cond(variant, Some(&obs))?;
            set.push(normalized.into_vector(), prior, cond);
        }
        Ok(set)
    }

    fn overwrite_endpoints(&self, y: &mut DVector<f64>, cond: &DVector<f64>) {
        let d_pos = self.d_pos();
        let n = self.waypoints.n_waypoints;
        if self.waypoints.include_endpoints {
            y.rows_mut(0, d_pos).copy_from(&cond.rows(0, d_pos));
            y.rows_mut((n - 1) * d_pos, d_pos).copy_from(&cond.rows(d_pos, d_pos));
        }
    }

    /// Sample waypoints with the upper model; endpoints are overwritten with
    /// the task's start and goal after every step.
    pub fn upper_sample<R: Rng + ?Sized>(&self, upper: &Denoiser, task: &TaskSpec, rng: &mut R) -> Result<KeyStateObservation> {
        let prior = &self.iso_upper;
        let cond = self.upper_cond(task);
        let mut y = prior.sample_vector(rng);
        self.overwrite_endpoints(&mut y, &cond);
        for i in (1..=self.sched.n_steps()).rev() {
            let pred = upper.predict_mean(&y, i, &cond, prior, &self.sched)?;
            y = reverse_step(i, &pred, prior, &self.sched, rng);
            self.overwrite_endpoints(&mut y, &cond);
        }
        self.observation_from_waypoints(y)
    }

    fn inpaint(&self, tau: &mut DVector<f64>, start: &[f64], goal: &[f64]) {
        let d = self.state_dim();
        let last = (self.horizon() - 1) * d;
        tau.rows_mut(0, d).copy_from_slice(start);
        tau.rows_mut(last, d).copy_from_slice(goal);
    }
}

/// Steps after which denoising snapshots are kept: `{N, 3N/4, N/2, N/4, 1}`.
pub fn snapshot_steps(n: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = [n, 3 * n / 4, n / 2, n / 4, 1].into_iter().map(|s| s.max(1)).collect();
    steps.dedup();
    steps
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    /// Planned trajectory in world units.
    pub trajectory: Trajectory,
    /// Key states used, in world units.
    pub waypoints: Option<Vec<Vec<f64>>>,
    /// `(i, τⁱ⁻¹)` in world units for each snapshot step `i`.
    pub snapshots: Vec<(usize, Trajectory)>,
    pub denoiser_evals: usize,
}

/// A trained variant ready to plan.
#[derive(Debug, Clone, Copy)]
pub struct Planner<'a> {
    pub ctx: &'a PlannerContext,
    pub variant: VariantSpec,
    pub upper: Option<&'a Denoiser>,
    pub lower: &'a Denoiser,
    pub cache: &'a GainCache,
}

impl<'a> Planner<'a> {
    pub fn new(
        ctx: &'a PlannerContext,
        kind: Variant,
        upper: Option<&'a Denoiser>,
        lower: &'a Denoiser,
        cache: &'a GainCache,
    ) -> Result<Self> {
        let variant = make_variant(kind);
        if variant.needs_keystates() && upper.is_none() {
            return Err(Error::InvalidArgument(format!("{kind} needs an upper-level model")));
        }
        let data_dim = ctx.horizon() * ctx.state_dim();
        if lower.config.data_dim != data_dim || lower.config.cond_dim != ctx.lower_cond_dim(&variant) {
            return Err(Error::ShapeMismatch { expected: data_dim, actual: lower.config.data_dim });
        }
        Ok(Planner { ctx, variant, upper, lower, cache })
    }

    /// Full test-time pipeline: waypoints from the upper level (if used),
    /// then the lower-level reverse process.
    pub fn plan<R: Rng + ?Sized>(&self, task: &TaskSpec, rng: &mut R, snapshots: bool) -> Result<PlanOutput> {
        let obs = match (self.variant.needs_keystates(), self.upper) {
            (true, Some(upper)) => Some(self.ctx.upper_sample(upper, task, rng)?),
            (true, None) => return Err(Error::InvalidArgument(format!("{} needs an upper-level model", self.variant.kind))),
            (false, _) => None,
        };
        self.plan_with_keystates(task, obs.as_ref(), rng, snapshots)
    }

    /// Lower level only, given key states from any source.
    pub fn plan_with_keystates<R: Rng + ?Sized>(
        &self,
        task: &TaskSpec,
        obs: Option<&KeyStateObservation>,
        rng: &mut R,
        snapshots: bool,
    ) -> Result<PlanOutput> {
        let ctx = self.ctx;
        let prior = ctx.lower_prior(&self.variant, task, obs, self.cache)?;
        let cond = ctx.lower_cond(&self.variant, obs)?;
        let start = ctx.normalized_start(task);
        let goal = ctx.normalized_goal_state(task);
        let keep = if snapshots { snapshot_steps(ctx.sched.n_steps()) } else { Vec::new() };
        let to_world = |v: DVector<f64>| ctx.stats.denormalize(&Trajectory::new(ctx.horizon(), ctx.state_dim(), v).expect("planner shapes"));

        let mut tau = prior.sample_vector(rng);
        if self.variant.inpaint {
            ctx.inpaint(&mut tau, &start, &goal);
        }
        let mut kept = Vec::new();
        let mut evals = 0;
        for i in (1..=ctx.sched.n_steps()).rev() {
            let pred = self.lower.predict_mean(&tau, i, &cond, &prior, &ctx.sched)?;
            evals += 1;
            tau = reverse_step(i, &pred, &prior, &ctx.sched, rng);
            if self.variant.inpaint {
                ctx.inpaint(&mut tau, &start, &goal);
            }
            if keep.contains(&i) {
                kept.push((i, to_world(tau.clone())));
            }
        }
        Ok(PlanOutput {
            trajectory: to_world(tau),
            waypoints: obs.map(|o| ctx.waypoints_world(o)),
            snapshots: kept,
            denoiser_evals: evals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, ScheduleKind};
    use crate::maze::{generate_dataset, DatasetConfig, MazeMap};
    use crate::rng::seeded;

    fn context(horizon: usize, n_steps: usize) -> (PlannerContext, Dataset) {
        let map = MazeMap::default_maze();
        let cfg = DatasetConfig { count: 8, horizon, ..DatasetConfig::default() };
        let data = generate_dataset(&map, &cfg, 3).unwrap();
        let ctx = PlannerContext::new(
            LtvModel::new(0.1, 2, 1.0, 1.0).unwrap(),
            data.stats.clone(),
            WaypointSpec::new(4, horizon, true).unwrap(),
            KeyStateVariances::default(),
            make_schedule(ScheduleKind::Cosine { s: 0.008 }, n_steps).unwrap(),
        )
        .unwrap();
        (ctx, data)
    }

    fn tiny(cfg: DenoiserConfig) -> Denoiser {
        let mut cfg = cfg;
        cfg.hidden_dim = 8;
        cfg.hidden_layers = 1;
        cfg.embed_dim = 4;
        Denoiser::new(cfg, &mut seeded(1))
    }

    #[test]
    fn two_endpoint_waypoints() {
        assert_eq!(WaypointSpec::new(2, 10, true).unwrap().timesteps(), vec![0, 9]);
        assert_eq!(WaypointSpec::new(3, 5, true).unwrap().timesteps(), vec![0, 2, 4]);
        assert!(WaypointSpec::new(1, 10, true).is_err());
        assert!(WaypointSpec::new(11, 10, true).is_err());
        assert_eq!(WaypointSpec::new(2, 9, false).unwrap().timesteps(), vec![3, 5]);
    }

    #[test]
    fn keystates_of_constant_trajectory() {
        let traj = Trajectory::from_states(&vec![vec![2.0, -1.0, 0.0, 0.0]; 12]).unwrap();
        let spec = WaypointSpec::new(4, 12, true).unwrap();
        let obs = extract_keystates(&traj, &spec, &KeyStateVariances::default()).unwrap();
        assert_eq!(obs.y.as_slice(), &[2.0, -1.0, 2.0, -1.0, 2.0, -1.0, 2.0, -1.0]);
        let diag = obs.k_y.diagonal();
        assert_eq!(diag[0], 1e-6);
        assert_eq!(diag[2], 1e-2);
        assert_eq!(diag[7], 1e-6);
        assert!(extract_keystates(&traj, &WaypointSpec::new(4, 13, true).unwrap(), &KeyStateVariances::default()).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("gp_fancy".parse::<Variant>().is_err());
        assert!(make_variant(Variant::IsoPlain).inpaint);
        assert!(!make_variant(Variant::GpKeystates).inpaint);
        assert!(!make_variant(Variant::GpPlain).needs_keystates());
    }

    #[test]
    fn gp_plain_mean_is_start_conditioned_gp_mean() {
        let (ctx, data) = context(16, 8);
        let cache = GainCache::new();
        let task = &data.tasks[0];
        let prior = ctx.lower_prior(&make_variant(Variant::GpPlain), task, None, &cache).unwrap();
        let direct = crate::structured_prior::condition(&ctx.task_gp(task).unwrap(), &ctx.start_observation(task)).unwrap();
        assert_eq!(prior.mean, direct.mean);
        assert_eq!(prior.cov(), direct.cov());
    }

    #[test]
    fn all_variants_emit_same_shape_with_n_evaluations() {
        let (ctx, data) = context(16, 8);
        let cache = GainCache::new();
        let upper = tiny(ctx.upper_config(8, 1));
        for kind in Variant::ALL {
            let lower = tiny(ctx.lower_config(&make_variant(kind), 8, 1));
            let planner = Planner::new(&ctx, kind, Some(&upper), &lower, &cache).unwrap();
            let out = planner.plan(&data.tasks[1], &mut seeded(4), true).unwrap();
            assert_eq!((out.trajectory.horizon(), out.trajectory.state_dim()), (16, 4));
            assert_eq!(out.denoiser_evals, 8);
            assert_eq!(out.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![8, 6, 4, 2, 1]);
            assert_eq!(out.snapshots.last().unwrap().1, out.trajectory);
        }
    }

    #[test]
    fn inpainting_and_upper_endpoints_are_exact() {
        let (ctx, data) = context(16, 8);
        let cache = GainCache::new();
        let upper = tiny(ctx.upper_config(8, 1));
        let task = &data.tasks[2];
        let obs = ctx.upper_sample(&upper, task, &mut seeded(9)).unwrap();
        let world = ctx.waypoints_world(&obs);
        for k in 0..2 {
            assert!((world[0][k] - task.start_pos[k]).abs() < 1e-12);
            assert!((world[3][k] - task.goal[k]).abs() < 1e-12);
        }
        let lower = tiny(ctx.lower_config(&make_variant(Variant::IsoPlain), 8, 1));
        let out = Planner::new(&ctx, Variant::IsoPlain, None, &lower, &cache)
            .unwrap()
            .plan(task, &mut seeded(2), false)
            .unwrap();
        let end = out.trajectory.state_slice(15);
        assert!((end[0] - task.goal[0]).abs() < 1e-12 && end[2].abs() < 1e-12);
        assert!((out.trajectory.get(0, 1) - task.start_pos[1]).abs() < 1e-12);
    }

    #[test]
    fn planning_is_seed_deterministic() {
        let (ctx, data) = context(16, 8);
        let cache = GainCache::new();
        let upper = tiny(ctx.upper_config(8, 1));
        let lower = tiny(ctx.lower_config(&make_variant(Variant::GpKeystates), 8, 1));
        let planner = Planner::new(&ctx, Variant::GpKeystates, Some(&upper), &lower, &cache).unwrap();
        let a = planner.plan(&data.tasks[0], &mut seeded(5), false).unwrap();
        let b = planner.plan(&data.tasks[0], &mut seeded(5), false).unwrap();
        assert_eq!(a, b);
        assert!(Planner::new(&ctx, Variant::GpKeystates, None, &lower, &cache).is_err());
    }

    #[test]
    fn snapshot_steps_for_default_n() {
        assert_eq!(snapshot_steps(64), vec![64, 48, 32, 16, 1]);
        assert_eq!(snapshot_steps(2), vec![2, 1]);
    }
}
