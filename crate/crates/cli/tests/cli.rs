use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
[data]
count = 12

[schedule]
n_steps = 8

[upper]
hidden_dim = 8
hidden_layers = 1
steps = 5
batch_size = 4
log_every = 5

[lower]
hidden_dim = 8
hidden_layers = 1
steps = 5
batch_size = 4
log_every = 5

[eval]
episodes = 2
";

fn gpdiff(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpdiff"))
        .args(["--config", "tiny.toml"])
        .args(args)
        .current_dir(dir)
        .env_remove("GPDIFF_CACHE_FILE")
        .output()
        .unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = workspace();
    let p = dir.path();
    assert_eq!(gpdiff(p, &["--help"]).status.code(), Some(0));
    assert_eq!(gpdiff(p, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(gpdiff(p, &["train", "--level", "lower", "--variant", "gp_fancy"]).status.code(), Some(1));
    assert_eq!(gpdiff(p, &["--set", "data.count=0", "gen-data"]).status.code(), Some(1));
    assert_eq!(gpdiff(p, &["--set", "nonsense.key=1", "gen-data"]).status.code(), Some(1));
    // Nothing generated yet.
    assert_eq!(gpdiff(p, &["train", "--level", "upper"]).status.code(), Some(1));
    ok(&gpdiff(p, &["gen-data"]));
    assert_eq!(gpdiff(p, &["train", "--level", "lower"]).status.code(), Some(1));
    assert_eq!(gpdiff(p, &["plan", "--variant", "gp_plain", "--episode", "0"]).status.code(), Some(1));
    assert_eq!(gpdiff(p, &["eval"]).status.code(), Some(1));
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = workspace();
    let p = dir.path();
    let text = ok(&gpdiff(p, &["gen-data"]));
    assert!(text.contains("collision check: 12/12 pass"), "{text}");
    ok(&gpdiff(p, &["train", "--level", "upper"]));
    for v in ["iso_plain", "iso_cond", "gp_plain", "gp_keystates"] {
        let text = ok(&gpdiff(p, &["train", "--level", "lower", "--variant", v]));
        assert_eq!(text.contains("gain cache:"), v.starts_with("gp"), "{text}");
    }
    let loss = fs::read_to_string(p.join("runs/loss_lower_gp_keystates.csv")).unwrap();
    assert_eq!(loss.lines().count(), 6);

    ok(&gpdiff(p, &["plan", "--variant", "gp_keystates", "--start", "1.5,1.5", "--goal", "5.5,5.5", "--snapshots"]));
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("runs/plan_gp_keystates.json")).unwrap()).unwrap();
    assert_eq!(plan["trajectory"].as_array().unwrap().len(), 64);
    assert_eq!(plan["waypoints"].as_array().unwrap().len(), 6);
    assert_eq!(plan["snapshots"].as_array().unwrap().len(), 5);

    let table = ok(&gpdiff(p, &["eval"]));
    assert!(table.contains("gp_keystates"));
    let summary = fs::read_to_string(p.join("runs/eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);

    ok(&gpdiff(p, &["plot", "--plan", "runs/plan_gp_keystates.json", "--out", "plan.svg"]));
    let svg = fs::read_to_string(p.join("plan.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("class=\"panel\"").count(), 6);
    ok(&gpdiff(p, &["plot", "--expert", "3", "--out", "expert.svg"]));
    assert!(fs::read_to_string(p.join("expert.svg")).unwrap().contains("class=\"trajectory\""));
}
