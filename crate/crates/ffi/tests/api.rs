use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use geofence_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = gf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn solve_matches_brute_force() {
    unsafe {
        let b = gf_problem_builder_new(2.0);
        assert_eq!(gf_problem_builder_add(b, 1, 1.0, 1.0), GfStatus::Ok);
        assert_eq!(gf_problem_builder_add(b, 2, 2.0, 2.0), GfStatus::Ok);
        assert_eq!(gf_problem_builder_add(b, 3, 4.0, 0.5), GfStatus::Ok);
        let mut greedy = ptr::null_mut();
        let mut brute = ptr::null_mut();
        assert_eq!(gf_solve(b, &mut greedy), GfStatus::Ok);
        assert_eq!(gf_brute_force_solve(b, &mut brute), GfStatus::Ok);
        assert_eq!(gf_assignment_len(greedy), 3);
        assert!((gf_assignment_objective(greedy) - gf_assignment_objective(brute)).abs() < 1e-12);
        assert!((gf_assignment_expected_emission(greedy) - 2.0).abs() < 1e-12);
        let (mut id, mut x) = (0u32, 0.0f64);
        assert_eq!(gf_assignment_get(greedy, 1, &mut id, &mut x), GfStatus::Ok);
        assert_eq!((id, x), (2, 0.25));
        assert_eq!(
            gf_assignment_get(greedy, 3, &mut id, &mut x),
            GfStatus::OutOfRange
        );
        gf_assignment_free(greedy);
        gf_assignment_free(brute);
        gf_problem_builder_free(b);
    }
}

#[test]
fn invalid_problems_report_errors() {
    unsafe {
        let b = gf_problem_builder_new(1.0);
        gf_problem_builder_add(b, 1, 0.5, 1.0);
        let mut a = ptr::null_mut();
        assert_eq!(gf_solve(b, &mut a), GfStatus::InvalidArgument);
        assert!(a.is_null());
        assert!(last_error().contains("density"), "{}", last_error());
        gf_problem_builder_free(b);

        let b = gf_problem_builder_new(1.0);
        for i in 0..9 {
            gf_problem_builder_add(b, i, 1.0, 1.0);
        }
        assert_eq!(gf_brute_force_solve(b, &mut a), GfStatus::TooLarge);
        gf_problem_builder_free(b);

        assert_eq!(gf_solve(ptr::null(), &mut a), GfStatus::NullPointer);
        gf_assignment_free(ptr::null_mut());
    }
}

#[test]
fn emission_rates() {
    unsafe {
        let c = GfCoefficients {
            k: 1.0,
            a: 60.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            e: 0.0,
            f: 0.0,
            g: 0.0,
        };
        let mut r = 0.0;
        assert_eq!(gf_emission_rate_g_per_min(&c, 30.0, &mut r), GfStatus::Ok);
        assert_eq!(r, 1.0);

        let t = gf_table_bundled();
        let mut prev = f64::INFINITY;
        for class in 1..=4 {
            assert_eq!(
                gf_table_rate_g_per_min(t, class, 50.0, &mut r),
                GfStatus::Ok
            );
            assert!(r <= prev);
            prev = r;
        }
        assert_eq!(
            gf_table_rate_g_per_min(t, 7, 50.0, &mut r),
            GfStatus::InvalidArgument
        );
        gf_table_free(t);

        let mut t = ptr::null_mut();
        let missing = CString::new("/nonexistent/table.toml").unwrap();
        assert_eq!(gf_table_load(missing.as_ptr(), &mut t), GfStatus::Io);
    }
}

#[test]
fn run_scenario_and_write() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(
            gf_scenario_load(scenario_path("slack.toml").as_ptr(), &mut s),
            GfStatus::Ok
        );
        let mut on = ptr::null_mut();
        let mut off = ptr::null_mut();
        assert_eq!(gf_run(s, 3, 1, &mut on), GfStatus::Ok);
        assert_eq!(gf_run(s, 3, 0, &mut off), GfStatus::Ok);
        assert_eq!(gf_trace_len(on), 400);
        assert!(gf_trace_command_count(on) > 0);
        assert_eq!(gf_trace_command_count(off), 0);
        assert_eq!(
            gf_trace_mean_in_fence_rate(on),
            gf_trace_mean_in_fence_rate(off)
        );
        let mut row = GfTraceRow::default();
        assert_eq!(gf_trace_row(on, 0, &mut row), GfStatus::Ok);
        assert_eq!(row.sim_time, 1.0);
        assert_eq!(gf_trace_row(on, 400, &mut row), GfStatus::OutOfRange);

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(gf_trace_write(on, d.as_ptr()), GfStatus::Ok);
        assert!(dir.path().join("commands.csv").exists());

        gf_trace_free(on);
        gf_trace_free(off);
        gf_scenario_free(s);

        let mut bad = ptr::null_mut();
        let p = CString::new("/nonexistent.toml").unwrap();
        assert_eq!(gf_scenario_load(p.as_ptr(), &mut bad), GfStatus::Io);
    }
}

#[test]
fn coordinator_lifecycle() {
    unsafe {
        let mut cfg = std::mem::zeroed::<GfControllerConfig>();
        assert_eq!(gf_controller_config_default(&mut cfg), GfStatus::Ok);
        assert_eq!(cfg.mode, GfControlMode::Geofence as u8);
        let mut c = ptr::null_mut();
        assert_eq!(
            gf_coordinator_new(&cfg, ptr::null(), 1, &mut c),
            GfStatus::Ok
        );
        let main = CString::new("main").unwrap();
        assert_eq!(
            gf_coordinator_set_density(c, main.as_ptr(), 3.0),
            GfStatus::Ok
        );
        assert_eq!(
            gf_coordinator_set_density(c, main.as_ptr(), 0.2),
            GfStatus::InvalidArgument
        );

        let cyclist = CString::new("tag").unwrap();
        assert_eq!(
            gf_coordinator_on_detection(c, cyclist.as_ptr(), 1, 0.0, 0.0, 0.0),
            GfStatus::Ok
        );
        assert_eq!(gf_coordinator_fence_count(c), 1);

        let fleet: Vec<GfVehicle> = (0..10)
            .map(|i| GfVehicle {
                id: i + 1,
                x: i as f64 * 8.0,
                y: 0.0,
                speed_kmh: 40.0,
                euro_class: 1,
                powertrain: GfPowertrain::Hybrid as u8,
                edge_id: main.as_ptr(),
            })
            .collect();
        assert_eq!(
            gf_coordinator_tick(c, 0.0, fleet.as_ptr(), fleet.len(), 0.0),
            GfStatus::Ok
        );
        assert_eq!(gf_coordinator_command_count(c), 10);
        let mut cmd = std::mem::zeroed::<GfCommand>();
        assert_eq!(gf_coordinator_command(c, 0, &mut cmd), GfStatus::Ok);
        assert_eq!(cmd.vehicle_id, 1);

        // background above the limit: everyone electric
        assert_eq!(
            gf_coordinator_tick(c, 1.0, fleet.as_ptr(), fleet.len(), 1.5),
            GfStatus::Ok
        );
        for i in 0..gf_coordinator_command_count(c) {
            gf_coordinator_command(c, i, &mut cmd);
            assert_eq!(cmd.mode, GfMode::Electric);
        }

        let mut bad = fleet[0];
        bad.powertrain = 9;
        assert_eq!(
            gf_coordinator_tick(c, 2.0, &bad, 1, 0.0),
            GfStatus::InvalidArgument
        );

        assert_eq!(gf_coordinator_expire(c, 20.0), GfStatus::Ok);
        assert_eq!(gf_coordinator_fence_count(c), 1);
        assert_eq!(gf_coordinator_expire(c, 21.0), GfStatus::Ok);
        assert_eq!(gf_coordinator_fence_count(c), 0);
        assert_eq!(gf_coordinator_command_count(c), 10);
        gf_coordinator_command(c, 0, &mut cmd);
        assert_eq!(cmd.mode, GfMode::Polluting);

        let dir = tempfile::tempdir().unwrap();
        let log = CString::new(dir.path().join("log.csv").to_str().unwrap()).unwrap();
        assert_eq!(
            gf_coordinator_write_command_log(c, log.as_ptr()),
            GfStatus::Ok
        );
        let text = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
        assert_eq!(text.lines().count(), 31);
        gf_coordinator_free(c);

        cfg.mode = 7;
        assert_eq!(
            gf_coordinator_new(&cfg, ptr::null(), 1, &mut c),
            GfStatus::InvalidArgument
        );
        cfg.mode = GfControlMode::Geofence as u8;
        cfg.radius_m = -1.0;
        assert_eq!(
            gf_coordinator_new(&cfg, ptr::null(), 1, &mut c),
            GfStatus::InvalidArgument
        );
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let b = gf_problem_builder_new(f64::NAN);
        let mut a = ptr::null_mut();
        assert_ne!(gf_solve(b, &mut a), GfStatus::Ok);
        gf_problem_builder_free(b);
    }
    let other = std::thread::spawn(|| gf_last_error_message().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(!gf_last_error_message().is_null());
}
