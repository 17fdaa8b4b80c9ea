use std::path::PathBuf;
use std::process::{Command, Output};

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geofence-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    scenarios_dir().join(name).to_str().unwrap().to_string()
}

#[test]
fn run_writes_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = sim(&[
        "run",
        "--scenario",
        &scenario("expiry.toml"),
        "--seed",
        "3",
        "--tau",
        "2",
        "--radius",
        "80",
        "--limit",
        "0.8",
        "--background",
        "0.1",
        "--plots",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "trace.csv",
        "commands.csv",
        "vehicles.csv",
        "plot_total_emissions_vs_time.csv",
    ] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let budget = trace.lines().nth(1).unwrap().split(',').nth(10).unwrap();
    assert!((budget.parse::<f64>().unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn compare_writes_summary() {
    let out = tempfile::tempdir().unwrap();
    let o = sim(&[
        "compare",
        "--scenario",
        &scenario("slack.toml"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["control_mode_switches"], 0);
    assert!(out.path().join("baseline/trace.csv").exists());
    assert!(out.path().join("control/commands.csv").exists());
}

#[test]
fn sweep_prints_seed_ordered_json() {
    let o = sim(&[
        "sweep",
        "--scenario",
        &scenario("slack.toml"),
        "--seeds",
        "2..=4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    let seeds: Vec<u64> = v.iter().map(|s| s["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [2, 3, 4]);
}

#[test]
fn solve_debug_prints_assignment() {
    let o = sim(&["solve-debug", "--problem", &scenario("problem.toml")]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("0.250000"), "{text}");
}

#[test]
fn validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "name = \"bad\"\n[simulation]\ndt_s = -1.0\nhorizon_s = 1.0\ndetection_range_m = 1.0\n",
    )
    .unwrap();
    let o = sim(&["validate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt_s"));

    let o = sim(&[
        "validate",
        "--scenario",
        &scenario("demo.toml"),
        "--radius",
        "-1",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let weights = dir.path().join("w.csv");
    std::fs::write(&weights, "edge_id,weight\neast0,0.5\n").unwrap();
    let o = sim(&[
        "validate",
        "--scenario",
        &scenario("demo.toml"),
        "--density",
        weights.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = sim(&[
        "sweep",
        "--scenario",
        &scenario("demo.toml"),
        "--seeds",
        "9..3",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = sim(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_2() {
    let o = sim(&["validate", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));

    let blocker = tempfile::NamedTempFile::new().unwrap();
    let o = sim(&[
        "run",
        "--scenario",
        &scenario("slack.toml"),
        "--out",
        blocker.path().join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    assert_eq!(sim(&["--help"]).status.code(), Some(0));
}
