use gpdiff::denoiser::{Denoiser, Parameterization};
use gpdiff::diffusion::{make_schedule, ScheduleKind};
use gpdiff::gp_prior::LtvModel;
use gpdiff::hierarchy::{make_variant, KeyStateVariances, Planner, PlannerContext, Variant, WaypointSpec};
use gpdiff::maze::{generate_dataset, Dataset, DatasetConfig, MazeMap};
use gpdiff::rng::seeded;
use gpdiff::structured_prior::GainCache;
use proptest::prelude::*;

fn setup(horizon: usize, n_steps: usize) -> (PlannerContext, Dataset) {
    let map = MazeMap::default_maze();
    let data = generate_dataset(&map, &DatasetConfig { count: 16, horizon, ..DatasetConfig::default() }, 5).unwrap();
    let ctx = PlannerContext::new(
        LtvModel::new(0.1, 2, 1.0, 1.0).unwrap(),
        data.stats.clone(),
        WaypointSpec::new(6, horizon, true).unwrap(),
        KeyStateVariances::default(),
        make_schedule(ScheduleKind::Cosine { s: 0.008 }, n_steps).unwrap(),
    )
    .unwrap();
    (ctx, data)
}

/// A clean-predicting network whose output is identically zero.
fn zero_model(ctx: &PlannerContext, kind: Variant) -> Denoiser {
    let mut cfg = ctx.lower_config(&make_variant(kind), 8, 1);
    cfg.parameterization = Parameterization::PredictClean;
    let mut model = Denoiser::new(cfg, &mut seeded(kind as u64));
    let head = model.net.layers.last_mut().unwrap();
    head.w.fill(0.0);
    head.b.fill(0.0);
    model
}

proptest! {
    #[test]
    fn waypoint_timings_follow_half_up_rounding(horizon in 8usize..200, n in 2usize..8) {
        prop_assume!(n <= horizon);
        let spec = WaypointSpec::new(n, horizon, true).unwrap();
        // Integer form of floor(k(H−1)/(n−1) + 1/2).
        let want: Vec<usize> = (0..n).map(|k| (2 * k * (horizon - 1) + (n - 1)) / (2 * (n - 1))).collect();
        prop_assert_eq!(spec.timesteps(), want);
    }
}

#[test]
fn default_waypoint_timings() {
    assert_eq!(WaypointSpec::new(6, 64, true).unwrap().timesteps(), vec![0, 13, 25, 38, 50, 63]);
}

#[test]
fn keystate_prior_is_anchored_at_waypoints() {
    let (ctx, data) = setup(64, 16);
    let cache = GainCache::new();
    let variant = make_variant(Variant::GpKeystates);
    for (task, traj) in data.tasks.iter().zip(&data.trajectories).take(5) {
        let obs = ctx.keystates(&data.stats.normalize(traj)).unwrap();
        let prior = ctx.lower_prior(&variant, task, Some(&obs), &cache).unwrap();
        let gp = ctx.task_gp(task).unwrap();
        let d = ctx.state_dim();
        for s in &obs.indices {
            for c in s.coord_start..s.coord_start + s.coord_len {
                let r = s.timestep * d + c;
                assert!(prior.cov()[(r, r)].sqrt() <= gp.cov[(r, r)].sqrt() + 1e-12);
            }
        }
        // Empirical spread of τᴺ at the waypoints also respects the bound.
        let samples: Vec<_> = (0..2000).map(|k| prior.sample_vector(&mut seeded(k))).collect();
        for s in &obs.indices {
            let r = s.timestep * d + s.coord_start;
            let m = samples.iter().map(|v| v[r]).sum::<f64>() / 2000.0;
            let var = samples.iter().map(|v| (v[r] - m).powi(2)).sum::<f64>() / 1999.0;
            assert!(var.sqrt() <= 1.1 * gp.cov[(r, r)].sqrt());
        }
    }
}

#[test]
fn isotropic_variants_share_noise_paths() {
    let (ctx, data) = setup(32, 12);
    let cache = GainCache::new();
    let task = &data.tasks[2];
    let obs = ctx.keystates(&data.stats.normalize(&data.trajectories[2])).unwrap();
    let upper = Denoiser::new(ctx.upper_config(8, 1), &mut seeded(2));
    let plain = zero_model(&ctx, Variant::IsoPlain);
    let cond = zero_model(&ctx, Variant::IsoCond);
    let a = Planner::new(&ctx, Variant::IsoPlain, None, &plain, &cache).unwrap();
    let b = Planner::new(&ctx, Variant::IsoCond, Some(&upper), &cond, &cache).unwrap();
    let pa = a.plan_with_keystates(task, None, &mut seeded(9), true).unwrap();
    let pb = b.plan_with_keystates(task, Some(&obs), &mut seeded(9), true).unwrap();
    assert_eq!(pa.trajectory, pb.trajectory);
    assert_eq!(pa.snapshots, pb.snapshots);
}

#[test]
fn every_variant_uses_n_denoiser_evaluations() {
    let (ctx, data) = setup(64, 64);
    let cache = GainCache::new();
    let upper = Denoiser::new(ctx.upper_config(8, 1), &mut seeded(2));
    for kind in Variant::ALL {
        let lower = zero_model(&ctx, kind);
        let out = Planner::new(&ctx, kind, Some(&upper), &lower, &cache).unwrap().plan(&data.tasks[0], &mut seeded(1), false).unwrap();
        assert_eq!(out.denoiser_evals, 64, "{kind}");
    }
}

#[test]
fn lower_level_is_agnostic_to_waypoint_source() {
    let (ctx, data) = setup(32, 10);
    let cache = GainCache::new();
    let upper = Denoiser::new(ctx.upper_config(8, 1), &mut seeded(3));
    let lower = Denoiser::new(ctx.lower_config(&make_variant(Variant::GpKeystates), 8, 1), &mut seeded(4));
    let planner = Planner::new(&ctx, Variant::GpKeystates, Some(&upper), &lower, &cache).unwrap();
    let task = &data.tasks[3];

    // Sampled waypoints: plan() is upper_sample followed by the lower level.
    let full = planner.plan(task, &mut seeded(7), false).unwrap();
    let mut rng = seeded(7);
    let sampled = ctx.upper_sample(&upper, task, &mut rng).unwrap();
    let split = planner.plan_with_keystates(task, Some(&sampled), &mut rng, false).unwrap();
    assert_eq!(full, split);

    // Ground-truth waypoints enter through the same call and only change Y.
    let truth = ctx.keystates(&data.stats.normalize(&data.trajectories[3])).unwrap();
    assert_eq!(truth.indices, sampled.indices);
    assert_eq!(truth.k_y, sampled.k_y);
    let out = planner.plan_with_keystates(task, Some(&truth), &mut seeded(8), false).unwrap();
    assert_eq!(out.waypoints.unwrap().len(), 6);
}
