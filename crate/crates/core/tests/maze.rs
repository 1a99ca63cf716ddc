mod common;

use gpdiff::evaluation::{success, velocity_mae};
use gpdiff::maze::{collision_free, generate_dataset, generate_expert, sample_task, Dataset, DatasetConfig, MazeMap, NormStats, TaskSpec};
use gpdiff::rng::seeded;
use gpdiff::Trajectory;
use proptest::prelude::*;

fn path(points: &[[f64; 2]]) -> Trajectory {
    Trajectory::from_states(&points.iter().map(|p| vec![p[0], p[1], 0.0, 0.0]).collect::<Vec<_>>()).unwrap()
}

#[test]
fn collision_check_matches_oversampled_oracle() {
    let map = MazeMap::default_maze();
    // (trajectory, expected free)
    let corpus: Vec<(Vec<[f64; 2]>, bool)> = vec![
        (vec![[1.2, 1.2], [1.8, 1.8]], true),
        (vec![[2.5, 1.5], [2.5, 3.5]], false),
        // Diagonal passing just outside the corner of wall cell (2, 2).
        (vec![[1.2, 2.75], [2.75, 1.2]], true),
        // Diagonal cutting across the same corner.
        (vec![[1.4, 3.0], [3.0, 1.4]], false),
        (vec![[1.1, 1.5], [5.9, 1.5]], true),
        (vec![[0.5, 1.5], [1.5, 1.5]], false),
        (vec![[1.5, 1.5], [5.5, 1.5], [5.5, 5.5], [1.5, 5.5]], true),
        (vec![[3.1, 3.5], [3.95, 3.5]], true),
        (vec![[3.1, 3.5], [4.05, 3.5]], false),
        (vec![[1.5, 5.5], [1.5, 3.5], [3.5, 3.5], [3.5, 5.5]], false),
    ];
    for (k, (points, expected)) in corpus.iter().enumerate() {
        let traj = path(points);
        assert_eq!(common::oversampled_collision_free(&map, &traj), *expected, "oracle, case {k}");
        assert_eq!(collision_free(&map, &traj), *expected, "library, case {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn expert_trajectories_are_valid(seed in 0u64..10_000, horizon in 16usize..80) {
        let map = MazeMap::default_maze();
        let mut rng = seeded(seed);
        let task = sample_task(&map, 3, &mut rng).unwrap();
        let traj = generate_expert(&map, &task, horizon, 0.1, &mut rng).unwrap();
        prop_assert_eq!(traj.horizon(), horizon);
        prop_assert!(collision_free(&map, &traj));
        prop_assert!(common::oversampled_collision_free(&map, &traj));
        prop_assert!(velocity_mae(&traj, 0.1) < 1e-8);
        prop_assert_eq!(traj.position(0), &task.start_pos[..]);
        let end = traj.position(horizon - 1);
        prop_assert!((end[0] - task.goal[0]).abs() < 1e-12 && (end[1] - task.goal[1]).abs() < 1e-12);
        prop_assert!(success(&map, &traj, &task, map.cell_size));
    }

    #[test]
    fn normalization_round_trips(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 2..20)
            .prop_filter("varying", |r| (0..3).all(|k| r.iter().any(|s| s[k] != r[0][k]))),
        constant in -5.0f64..5.0,
    ) {
        let mut states = rows.clone();
        for s in &mut states { s[3] = constant; }
        let traj = Trajectory::from_states(&states).unwrap();
        let stats = NormStats::fit(std::slice::from_ref(&traj)).unwrap();
        let n = stats.normalize(&traj);
        let back = stats.denormalize(&n);
        for t in 0..traj.horizon() {
            for k in 0..4 {
                prop_assert!((back.get(t, k) - traj.get(t, k)).abs() < 1e-12 * (1.0 + traj.get(t, k).abs()));
            }
            for k in 0..3 {
                prop_assert!(n.get(t, k).abs() <= 1.0 + 1e-9);
            }
            prop_assert_eq!(n.get(t, 3), constant);
        }
    }
}

#[test]
fn sampled_tasks_respect_free_space_distance_and_seed() {
    let map = MazeMap::default_maze();
    let mut rng = seeded(11);
    let tasks: Vec<TaskSpec> = (0..1000).map(|_| sample_task(&map, 3, &mut rng).unwrap()).collect();
    for t in &tasks {
        assert!(map.is_free_point(t.start_pos) && map.is_free_point(t.goal));
        let a = map.cell_of(t.start_pos).unwrap();
        let b = map.cell_of(t.goal).unwrap();
        assert!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1) >= 3);
        assert_eq!(t.start_vel, [0.0, 0.0]);
    }
    let mut rng = seeded(11);
    let again: Vec<TaskSpec> = (0..1000).map(|_| sample_task(&map, 3, &mut rng).unwrap()).collect();
    assert_eq!(tasks, again);
}

#[test]
fn dataset_files_round_trip_and_are_reproducible() {
    let map = MazeMap::default_maze();
    let cfg = DatasetConfig { count: 1000, ..DatasetConfig::default() };
    let a = generate_dataset(&map, &cfg, 7).unwrap();
    let b = generate_dataset(&map, &cfg, 7).unwrap();
    assert_eq!(a.to_binary(), b.to_binary());
    assert!(a.trajectories.iter().all(|t| collision_free(&map, t)));

    let dir = tempfile::tempdir().unwrap();
    for name in ["d.txt", "d.bin"] {
        let p = dir.path().join(name);
        a.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), a, "{name}");
    }
    let normalized = a.normalize();
    for t in &normalized.trajectories {
        assert!(t.as_vector().iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }
}
