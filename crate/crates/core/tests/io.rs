use std::path::{Path, PathBuf};

use geofence_core::coordinator::Background;
use geofence_core::report::{self, DebugProblem, DensityFile};
use geofence_core::sim::Scenario;
use geofence_core::{EdgeId, Error};

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[test]
fn bundled_scenarios_round_trip() {
    for name in ["demo", "slack", "background_step", "expiry", "ramp"] {
        let path = scenarios_dir().join(format!("{name}.toml"));
        let s = Scenario::load(&path).unwrap();
        let text = s.to_toml_string();
        let back = Scenario::from_toml_str(&text, name, Some(&scenarios_dir())).unwrap();
        assert_eq!(back, s, "{name}");
        assert_eq!(
            back.to_toml_string(),
            text,
            "{name}: canonical form is stable"
        );
    }
}

#[test]
fn validation_reports_every_violation() {
    let text = r#"
name = "bad"
[simulation]
dt_s = 0.0
horizon_s = 10.0
detection_range_m = 10.0
[controller]
radius_m = -1.0
[[edge]]
id = "a"
geometry = [[0.0, 0.0], [100.0, 0.0]]
speed_limit_kmh = 40.0
density = 0.5
"#;
    let err = Scenario::from_toml_str(text, "bad.toml", None).unwrap_err();
    let Error::Validation { violations, .. } = &err else {
        panic!("expected validation error, got {err}");
    };
    assert!(violations.len() >= 3, "{err}");
    let msg = err.to_string();
    for needle in ["dt_s", "radius_m", "density"] {
        assert!(msg.contains(needle), "missing {needle} in {msg}");
    }
    assert!(err.is_validation());
}

#[test]
fn unknown_fields_are_rejected() {
    let text = "name = \"x\"\n[simulation]\ndt_s = 1.0\nhorizon_s = 1.0\ndetection_range_m = 1.0\nbogus = 3\n";
    assert!(Scenario::from_toml_str(text, "x", None)
        .unwrap_err()
        .is_validation());
}

#[test]
fn density_file_overrides_weights() {
    let mut s = Scenario::load(&scenarios_dir().join("demo.toml")).unwrap();
    let d = DensityFile::load(&scenarios_dir().join("demo_density.csv")).unwrap();
    d.apply(&mut s).unwrap();
    assert_eq!(
        s.network.get(&EdgeId::new("side2")).unwrap().density_weight,
        2.0
    );

    let weights: Vec<f64> = s.network.edges().iter().map(|e| e.density_weight).collect();
    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().cloned().fold(0.0, f64::max);
    assert_eq!((lo, hi), (1.0, 5.0));

    let unknown = DensityFile::from_csv_str("edge_id,weight\nnowhere,2.0\n", "t").unwrap();
    let err = unknown.apply(&mut s).unwrap_err();
    assert!(err.to_string().contains("nowhere"), "{err}");
}

#[test]
fn background_csv_argument() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bg.csv");
    std::fs::write(&p, "time_s,level\n0,0.1\n60,0.5\n").unwrap();
    let bg = report::parse_background(p.to_str().unwrap()).unwrap();
    let Background::Series(samples) = &bg else {
        panic!("{bg:?}")
    };
    assert_eq!(samples.len(), 2);
    assert_eq!(bg.level_at(30.0), 0.1);
    assert_eq!(bg.level_at(61.0), 0.5);
}

#[test]
fn trace_files_are_written_with_headers() {
    let s = Scenario::load(&scenarios_dir().join("expiry.toml")).unwrap();
    let trace = geofence_core::sim::run(&s, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = report::write_trace(&trace, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    assert!(read(report::TRACE_FILE).starts_with("sim_time,fence_ids,"));
    assert!(read(report::COMMAND_LOG_FILE).starts_with(
        "sim_time,fence_id,vehicle_id,d_i,e_i,x_i,draw,commanded_mode,effective_time\n"
    ));
    assert!(read(report::VEHICLE_FILE).starts_with("sim_time,vehicle_id,edge,"));
    assert_eq!(
        read(report::TRACE_FILE).lines().count(),
        trace.rows.len() + 1
    );

    let plots = report::write_plot_data(&trace, None, dir.path()).unwrap();
    // the before/after plot needs a baseline
    assert_eq!(plots.len(), 3);
}

#[test]
fn empty_command_log_still_has_a_header() {
    let csv = report::command_log_csv(&[]).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("sim_time,fence_id,"));
}

#[test]
fn bundled_problem_file() {
    let p = DebugProblem::load(&scenarios_dir().join("problem.toml")).unwrap();
    assert_eq!(p.len(), 3);
    let a = geofence_core::optimizer::solve(&p);
    // d*e: vehicle 1 -> 1, vehicle 2 -> 4, vehicle 3 -> 2
    assert_eq!(a.get(geofence_core::VehicleId(1)), Some(1.0));
    assert_eq!(a.get(geofence_core::VehicleId(3)), Some(1.0));
    assert_eq!(a.get(geofence_core::VehicleId(2)), Some(0.25));
}

#[test]
fn missing_files_are_io_errors() {
    let err = Scenario::load(Path::new("/nonexistent/scenario.toml")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(!err.is_validation());
}
