//! Hand-written SVG: maze cells, a trajectory, its waypoints, and optional
//! denoising snapshots laid out left to right.

use std::fmt::Write as _;

use gpdiff::maze::MazeMap;
use gpdiff::Trajectory;

/// Pixels per world unit.
pub const PX_PER_UNIT: f64 = 60.0;
const GAP: f64 = 20.0;

pub struct Scene<'a> {
    pub title: String,
    pub trajectory: Option<&'a Trajectory>,
    pub waypoints: &'a [Vec<f64>],
    /// `(step, τ)` pairs; each gets its own panel.
    pub snapshots: &'a [(usize, Trajectory)],
    pub start: Option<[f64; 2]>,
    pub goal: Option<[f64; 2]>,
}

fn to_px(map: &MazeMap, p: &[f64]) -> (f64, f64) {
    let (_, h) = map.world_size();
    (p[0] * PX_PER_UNIT, (h - p[1]) * PX_PER_UNIT)
}

/// Inverse of the panel-local pixel mapping.
pub fn px_to_world(map: &MazeMap, x: f64, y: f64) -> [f64; 2] {
    let (_, h) = map.world_size();
    [x / PX_PER_UNIT, h - y / PX_PER_UNIT]
}

fn polyline(map: &MazeMap, traj: &Trajectory, kind: &str, color: &str) -> String {
    let points: Vec<String> = (0..traj.horizon())
        .map(|t| {
            let (x, y) = to_px(map, traj.position(t));
            format!("{x:.4},{y:.4}")
        })
        .collect();
    format!(
        "<polyline class=\"{kind}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

fn panel(map: &MazeMap, scene: &Scene<'_>, traj: Option<&Trajectory>, label: &str) -> String {
    let mut s = String::new();
    let (w, h) = map.world_size();
    writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{:.1}\" height=\"{:.1}\" fill=\"white\" stroke=\"black\"/>",
        w * PX_PER_UNIT,
        h * PX_PER_UNIT
    )
    .unwrap();
    let c = map.cell_size * PX_PER_UNIT;
    for cy in 0..map.height() {
        for cx in 0..map.width() {
            if map.is_occupied(cx, cy) {
                let x = cx as f64 * c;
                let y = (map.height() - 1 - cy) as f64 * c;
                writeln!(s, "<rect class=\"wall\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{c:.1}\" height=\"{c:.1}\" fill=\"#444\"/>").unwrap();
            }
        }
    }
    if let Some(t) = traj {
        s.push_str(&polyline(map, t, "trajectory", "#1f77b4"));
    }
    for wp in scene.waypoints {
        let (x, y) = to_px(map, wp);
        writeln!(s, "<circle class=\"waypoint\" cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"5\" fill=\"#ff7f0e\"/>").unwrap();
    }
    for (p, color, class) in [(scene.start, "#2ca02c", "start"), (scene.goal, "#d62728", "goal")] {
        if let Some(p) = p {
            let (x, y) = to_px(map, &p);
            writeln!(s, "<circle class=\"{class}\" cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"7\" fill=\"none\" stroke=\"{color}\" stroke-width=\"3\"/>").unwrap();
        }
    }
    writeln!(s, "<text x=\"4\" y=\"{:.1}\" font-size=\"14\">{label}</text>", h * PX_PER_UNIT + 16.0).unwrap();
    s
}

/// Render `scene` on `map`. Snapshot panels come first (noisiest on the
/// left), followed by the trajectory panel if there is one.
pub fn render_svg(map: &MazeMap, scene: &Scene<'_>) -> String {
    let (w, h) = map.world_size();
    let pw = w * PX_PER_UNIT;
    let ph = h * PX_PER_UNIT + 24.0;
    let mut panels: Vec<(Option<&Trajectory>, String)> =
        scene.snapshots.iter().map(|(i, t)| (Some(t), format!("step {i}"))).collect();
    if scene.trajectory.is_some() || panels.is_empty() {
        panels.push((scene.trajectory, scene.title.clone()));
    }
    let total_w = panels.len() as f64 * (pw + GAP) - GAP;
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w:.1}\" height=\"{ph:.1}\" viewBox=\"0 0 {total_w:.1} {ph:.1}\">"
    )
    .unwrap();
    for (k, (traj, label)) in panels.iter().enumerate() {
        writeln!(s, "<g class=\"panel\" transform=\"translate({:.1},0)\">", k as f64 * (pw + GAP)).unwrap();
        s.push_str(&panel(map, scene, *traj, label));
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
