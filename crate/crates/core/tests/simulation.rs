use std::path::PathBuf;

use geofence_core::coordinator::{ControlMode, Mode};
use geofence_core::report::{self, PlotKind};
use geofence_core::sim::{run, run_baseline, Scenario};

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name);
    Scenario::load(&p).unwrap()
}

const EMPTY: &str = r#"
name = "empty"
[simulation]
dt_s = 1.0
horizon_s = 30.0
detection_range_m = 10.0
[[edge]]
id = "a"
geometry = [[0.0, 0.0], [500.0, 0.0]]
speed_limit_kmh = 40.0
[[cyclist]]
id = "c"
route = ["a"]
speed_kmh = 15.0
start_s = 0.0
"#;

#[test]
fn rates_add_up_every_step() {
    let trace = run(&scenario("demo.toml"), 3).unwrap();
    for r in &trace.rows {
        let sum = r.in_fence_rate + r.out_of_fence_rate;
        assert!(
            (sum - r.total_rate).abs() <= 1e-9 * r.total_rate.max(1.0),
            "t={}",
            r.sim_time
        );
        assert!(r.member_count <= r.vehicle_count);
        assert!(r.polluting_count <= r.vehicle_count);
    }
}

#[test]
fn control_never_raises_total_emissions() {
    let s = scenario("background_step.toml");
    let control = run(&s, 5).unwrap();
    let baseline = run_baseline(&s, 5).unwrap();
    assert_eq!(control.rows.len(), baseline.rows.len());
    for (c, b) in control.rows.iter().zip(&baseline.rows) {
        assert_eq!(c.vehicle_count, b.vehicle_count);
        assert!(c.total_rate <= b.total_rate + 1e-12, "t={}", c.sim_time);
        assert!(
            c.in_fence_rate <= b.in_fence_rate + 1e-12,
            "t={}",
            c.sim_time
        );
    }
}

#[test]
fn baseline_ignores_controller_settings() {
    let s = scenario("demo.toml");
    let reference = report::trace_csv(&run_baseline(&s, 8).unwrap()).unwrap();
    let mut tweaked = s.clone();
    tweaked.controller.tau_s = 5.0;
    tweaked.controller.switch_interval_s = 5.0;
    tweaked.controller.mode = ControlMode::SingleVehicle;
    assert_eq!(
        report::trace_csv(&run_baseline(&tweaked, 8).unwrap()).unwrap(),
        reference
    );

    let baseline = run_baseline(&s, 8).unwrap();
    assert!(baseline.commands.is_empty());
    assert_eq!(baseline.mode_switches, 0);
    assert_eq!(baseline.decision_count, 0);
}

#[test]
fn seeds_change_traffic() {
    let s = scenario("demo.toml");
    let a = report::trace_csv(&run(&s, 1).unwrap()).unwrap();
    let b = report::trace_csv(&run(&s, 2).unwrap()).unwrap();
    assert_ne!(a, b);
}

#[test]
fn zero_vehicles_means_zero_emissions() {
    let s = Scenario::from_toml_str(EMPTY, "empty", None).unwrap();
    let cmp = report::run_compare(&s, 0).unwrap();
    assert_eq!(cmp.summary.control_mean_in_fence_g_per_min, 0.0);
    assert_eq!(cmp.summary.baseline_mean_in_fence_g_per_min, 0.0);
    assert!(cmp.control.commands.is_empty());
    assert_eq!(cmp.control.rows.len(), 30);
}

#[test]
fn single_vehicle_mode_only_touches_detectors() {
    let mut s = scenario("demo.toml");
    s.controller.mode = ControlMode::SingleVehicle;
    let trace = run(&s, 4).unwrap();
    assert!(!trace.commands.is_empty());
    assert!(trace
        .commands
        .iter()
        .all(|c| c.x_i.is_none() && c.draw.is_none()));
    assert_eq!(trace.decision_count, 0);
    let electric = trace
        .vehicles
        .iter()
        .filter(|v| v.mode == Mode::Electric)
        .count();
    assert!(electric > 0);
}

#[test]
fn hil_latency_delays_commands() {
    let mut s = scenario("demo.toml");
    s.controller.actuation_latency_s = 5.0;
    s.controller.tau_s = 5.0;
    s.controller.switch_interval_s = 5.0;
    let trace = run(&s, 6).unwrap();
    assert!(!trace.commands.is_empty());
    for c in &trace.commands {
        assert_eq!(c.effective_time, c.sim_time + 5.0);
    }
    let decisions = report::decision_snapshots(&trace.commands);
    for ((t, _), _) in decisions {
        let t = f64::from_bits(t);
        assert_eq!((t - 1.0) % 5.0, 0.0, "decision at {t}");
    }
}

#[test]
fn spawn_ramp_raises_total_emissions() {
    let trace = run(&scenario("ramp.toml"), 7).unwrap();
    let table = report::emit_plot_data(&trace, PlotKind::TotalEmissionsVsTime, None).unwrap();
    let totals = table.column("total_rate").unwrap();
    let counts = table.column("vehicle_count").unwrap();
    assert!(counts.last().unwrap() > &50.0);
    for w in totals.windows(2) {
        assert!(w[1] >= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn before_after_plot_is_non_negative() {
    let cmp = report::run_compare(&scenario("demo.toml"), 2).unwrap();
    assert!(report::emit_plot_data(&cmp.control, PlotKind::InFenceBeforeAfter, None).is_err());
    let t = report::emit_plot_data(
        &cmp.control,
        PlotKind::InFenceBeforeAfter,
        Some(&cmp.baseline),
    )
    .unwrap();
    assert!(!t.rows.is_empty());
    for col in ["before", "after"] {
        assert!(t.column(col).unwrap().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn assignment_snapshot_matches_command_log() {
    let trace = run(&scenario("demo.toml"), 2).unwrap();
    let t = report::emit_plot_data(
        &trace,
        PlotKind::PerVehicleAssignmentSnapshot { at: Some(300.0) },
        None,
    )
    .unwrap();
    let logged: Vec<_> = trace
        .commands
        .iter()
        .filter(|c| c.sim_time == 300.0 && c.x_i.is_some())
        .collect();
    assert_eq!(t.rows.len(), logged.len());
    for (row, c) in t.rows.iter().zip(logged) {
        assert_eq!(row[1], c.vehicle_id.0 as f64);
        assert_eq!(row[2], c.d_i.unwrap());
        assert_eq!(row[3], c.e_i.unwrap());
        assert_eq!(row[4], c.x_i.unwrap());
    }
    assert!(report::emit_plot_data(
        &trace,
        PlotKind::PerVehicleAssignmentSnapshot { at: Some(10_000.0) },
        None
    )
    .is_err());
}

#[test]
fn fleet_size_sweep_counts_every_decision() {
    let trace = run(&scenario("demo.toml"), 2).unwrap();
    let t = report::emit_plot_data(&trace, PlotKind::FleetSizeSweep, None).unwrap();
    let decisions: f64 = t.column("decisions").unwrap().iter().sum();
    assert_eq!(
        decisions as usize,
        report::decision_snapshots(&trace.commands).len()
    );
    for row in &t.rows {
        // expected rate never exceeds demand
        assert!(row[3] <= row[2] + 1e-9);
    }
}

#[test]
fn sweep_is_ordered_and_matches_single_runs() {
    let s = scenario("slack.toml");
    let seeds = [5, 1, 3];
    let out = report::sweep(&s, &seeds).unwrap();
    assert_eq!(out.iter().map(|r| r.seed).collect::<Vec<_>>(), seeds);
    assert_eq!(out[1], report::run_compare(&s, 1).unwrap().summary);
}

#[test]
fn summary_round_trips_through_json() {
    let cmp = report::run_compare(&scenario("expiry.toml"), 1).unwrap();
    let back: report::RunSummary = serde_json::from_str(&cmp.summary.to_json()).unwrap();
    assert_eq!(back, cmp.summary);
    assert!(cmp.summary.fraction_within_budget >= 0.0 && cmp.summary.fraction_within_budget <= 1.0);
    for f in cmp.summary.dwell_polluting.values() {
        assert!((0.0..=1.0).contains(f));
    }
}
