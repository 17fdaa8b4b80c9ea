//! C ABI for `geofence-core`.
//!
//! Conventions:
//! - Every fallible function returns a [`GfStatus`]; on failure a message is
//!   available from [`gf_last_error_message`] on the same thread.
//! - Objects are opaque handles created by `*_new`/`*_load`/solve/run calls
//!   and released with the matching `*_free`. Passing NULL to a free function
//!   is a no-op.
//! - Strings are NUL-terminated UTF-8 and borrowed for the duration of the call.
//! - Panics never cross the boundary; they surface as [`GfStatus::Panic`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use geofence_core::coordinator::{
    BackgroundReading, ControlMode, ControllerConfig, Coordinator, FleetVehicle, Mode, ModeCommand,
    Powertrain,
};
use geofence_core::emission::{
    emission_rate_g_per_km, to_g_per_min, vehicle_emission_rate, CoefficientTable,
    EmissionCoefficients, PollutantKind, VehicleClass,
};
use geofence_core::geometry::Point;
use geofence_core::optimizer::{self, Assignment, GeofenceProblem, ProblemEntry};
use geofence_core::report;
use geofence_core::rng::{self, SimRng, Stream};
use geofence_core::sim::{self, Scenario, ScenarioTrace};
use geofence_core::{CyclistId, EdgeId, Error, VehicleId};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Validation = 4,
    Parse = 5,
    Io = 6,
    Model = 7,
    Config = 8,
    TooLarge = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Failure(GfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => GfStatus::InvalidArgument,
            Error::Model(_) => GfStatus::Model,
            Error::Config(_) => GfStatus::Config,
            Error::Size { .. } => GfStatus::TooLarge,
            Error::Validation { .. } => GfStatus::Validation,
            Error::Parse { .. } => GfStatus::Parse,
            Error::Io { .. } | Error::Csv(_) => GfStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: GfStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            GfStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(
        || fail(GfStatus::NullPointer, format!("{what} is NULL")),
        Ok,
    )
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(
        || fail(GfStatus::NullPointer, format!("{what} is NULL")),
        Ok,
    )
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(GfStatus::NullPointer, format!("{what} is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(GfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(GfStatus::NullPointer, format!("{what} is NULL"));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version string (static).
#[no_mangle]
pub extern "C" fn gf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- optimizer

/// Accumulates entries for one optimization problem.
pub struct GfProblemBuilder {
    limit: f64,
    entries: Vec<ProblemEntry>,
}

impl GfProblemBuilder {
    fn build(&self) -> Result<GeofenceProblem, Failure> {
        Ok(GeofenceProblem::new(self.entries.clone(), self.limit)?)
    }
}

/// Solution of a problem: x per vehicle, in the order entries were added.
pub struct GfAssignment {
    inner: Assignment,
    expected_emission: f64,
}

#[no_mangle]
pub extern "C" fn gf_problem_builder_new(limit_g_per_min: f64) -> *mut GfProblemBuilder {
    boxed(GfProblemBuilder {
        limit: limit_g_per_min,
        entries: Vec::new(),
    })
}

/// # Safety
/// `builder` must come from [`gf_problem_builder_new`].
#[no_mangle]
pub unsafe extern "C" fn gf_problem_builder_add(
    builder: *mut GfProblemBuilder,
    vehicle_id: u32,
    density: f64,
    emission_g_per_min: f64,
) -> GfStatus {
    guard(|| {
        let b = as_mut(builder, "builder")?;
        b.entries.push(ProblemEntry::new(
            VehicleId(vehicle_id),
            density,
            emission_g_per_min,
        ));
        Ok(())
    })
}

/// # Safety
/// `builder` must come from [`gf_problem_builder_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_problem_builder_free(builder: *mut GfProblemBuilder) {
    free(builder)
}

unsafe fn solve_with(
    builder: *const GfProblemBuilder,
    out: *mut *mut GfAssignment,
    brute: bool,
) -> GfStatus {
    guard(|| {
        let problem = as_ref(builder, "builder")?.build()?;
        let inner = if brute {
            optimizer::brute_force_solve(&problem)?
        } else {
            optimizer::solve(&problem)
        };
        let expected_emission = inner.expected_emission(&problem);
        write_out(
            out,
            boxed(GfAssignment {
                inner,
                expected_emission,
            }),
            "out",
        )
    })
}

/// Greedy solve. On success `*out` owns a new assignment.
///
/// # Safety
/// `builder` must be valid; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn gf_solve(
    builder: *const GfProblemBuilder,
    out: *mut *mut GfAssignment,
) -> GfStatus {
    solve_with(builder, out, false)
}

/// Exhaustive reference solve for small problems.
///
/// # Safety
/// As [`gf_solve`].
#[no_mangle]
pub unsafe extern "C" fn gf_brute_force_solve(
    builder: *const GfProblemBuilder,
    out: *mut *mut GfAssignment,
) -> GfStatus {
    solve_with(builder, out, true)
}

/// # Safety
/// `a` must be a valid assignment or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn gf_assignment_len(a: *const GfAssignment) -> usize {
    a.as_ref().map_or(0, |a| a.inner.values().len())
}

/// # Safety
/// `a` must be valid; `vehicle_id` and `x` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_assignment_get(
    a: *const GfAssignment,
    index: usize,
    vehicle_id: *mut u32,
    x: *mut f64,
) -> GfStatus {
    guard(|| {
        let a = as_ref(a, "assignment")?;
        let Some(&(id, value)) = a.inner.values().get(index) else {
            return fail(GfStatus::OutOfRange, format!("index {index} out of range"));
        };
        write_out(vehicle_id, id.0, "vehicle_id")?;
        write_out(x, value, "x")
    })
}

/// # Safety
/// `a` must be a valid assignment or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn gf_assignment_objective(a: *const GfAssignment) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.inner.objective_value())
}

/// Expected emission `sum x_i e_i` in g/min.
///
/// # Safety
/// `a` must be a valid assignment or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn gf_assignment_expected_emission(a: *const GfAssignment) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.expected_emission)
}

/// # Safety
/// `a` must come from a solve call or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_assignment_free(a: *mut GfAssignment) {
    free(a)
}

// ----------------------------------------------------------------- emission

/// Polynomial coefficients for one class and pollutant (rate in g/km).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfCoefficients {
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

/// Per-class emission coefficients.
pub struct GfCoefficientTable {
    inner: CoefficientTable,
}

/// Emission rate in g/min for explicit coefficients at `speed_kmh`.
///
/// # Safety
/// `coeffs` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_emission_rate_g_per_min(
    coeffs: *const GfCoefficients,
    speed_kmh: f64,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        let c = as_ref(coeffs, "coeffs")?;
        let coeffs = EmissionCoefficients {
            k: c.k,
            a: c.a,
            b: c.b,
            c: c.c,
            d: c.d,
            e: c.e,
            f: c.f,
            g: c.g,
        };
        let rate = to_g_per_min(emission_rate_g_per_km(&coeffs, speed_kmh)?, speed_kmh)?;
        write_out(out, rate, "out")
    })
}

/// The table shipped with the library.
#[no_mangle]
pub extern "C" fn gf_table_bundled() -> *mut GfCoefficientTable {
    boxed(GfCoefficientTable {
        inner: CoefficientTable::bundled(),
    })
}

/// # Safety
/// `path` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_load(
    path: *const c_char,
    out: *mut *mut GfCoefficientTable,
) -> GfStatus {
    guard(|| {
        let inner = CoefficientTable::load(Path::new(as_str(path, "path")?))?;
        write_out(out, boxed(GfCoefficientTable { inner }), "out")
    })
}

/// CO rate in g/min for a EURO class (1 to 4) at `speed_kmh`.
///
/// # Safety
/// `table` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_table_rate_g_per_min(
    table: *const GfCoefficientTable,
    euro_class: u8,
    speed_kmh: f64,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        let t = as_ref(table, "table")?;
        let class = VehicleClass::new(euro_class)?;
        let rate = vehicle_emission_rate(class, PollutantKind::Co, speed_kmh, &t.inner)?;
        write_out(out, rate, "out")
    })
}

/// # Safety
/// `table` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_table_free(table: *mut GfCoefficientTable) {
    free(table)
}

// --------------------------------------------------------------- simulation

/// A loaded scenario.
pub struct GfScenario {
    inner: Scenario,
}

/// The recorded output of one run.
pub struct GfTrace {
    inner: ScenarioTrace,
}

/// One simulation step of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GfTraceRow {
    pub sim_time: f64,
    /// Nonzero when at least one fence was active.
    pub fence_active: u8,
    pub member_count: usize,
    pub vehicle_count: usize,
    pub polluting_count: usize,
    pub in_fence_rate: f64,
    pub out_of_fence_rate: f64,
    pub total_rate: f64,
    pub budget: f64,
}

/// # Safety
/// `path` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_scenario_load(
    path: *const c_char,
    out: *mut *mut GfScenario,
) -> GfStatus {
    guard(|| {
        let inner = Scenario::load(Path::new(as_str(path, "path")?))?;
        write_out(out, boxed(GfScenario { inner }), "out")
    })
}

/// # Safety
/// `s` must come from [`gf_scenario_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_scenario_free(s: *mut GfScenario) {
    free(s)
}

/// Runs a scenario. With `control == 0` the controller is switched off.
///
/// # Safety
/// `scenario` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_run(
    scenario: *const GfScenario,
    seed: u64,
    control: u8,
    out: *mut *mut GfTrace,
) -> GfStatus {
    guard(|| {
        let s = &as_ref(scenario, "scenario")?.inner;
        let inner = if control == 0 {
            sim::run_baseline(s, seed)?
        } else {
            sim::run(s, seed)?
        };
        write_out(out, boxed(GfTrace { inner }), "out")
    })
}

/// Number of rows (steps), or 0 for NULL.
///
/// # Safety
/// `trace` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_trace_len(trace: *const GfTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.rows.len())
}

/// Number of command-log entries, or 0 for NULL.
///
/// # Safety
/// `trace` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_trace_command_count(trace: *const GfTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.commands.len())
}

/// # Safety
/// `trace` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_trace_row(
    trace: *const GfTrace,
    index: usize,
    out: *mut GfTraceRow,
) -> GfStatus {
    guard(|| {
        let t = as_ref(trace, "trace")?;
        let Some(r) = t.inner.rows.get(index) else {
            return fail(GfStatus::OutOfRange, format!("row {index} out of range"));
        };
        write_out(
            out,
            GfTraceRow {
                sim_time: r.sim_time,
                fence_active: r.fence_active() as u8,
                member_count: r.member_count,
                vehicle_count: r.vehicle_count,
                polluting_count: r.polluting_count,
                in_fence_rate: r.in_fence_rate,
                out_of_fence_rate: r.out_of_fence_rate,
                total_rate: r.total_rate,
                budget: r.budget,
            },
            "out",
        )
    })
}

/// Mean in-fence emission rate over steps with an active fence.
///
/// # Safety
/// `trace` must be valid or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn gf_trace_mean_in_fence_rate(trace: *const GfTrace) -> f64 {
    trace
        .as_ref()
        .map_or(f64::NAN, |t| t.inner.mean_in_fence_rate())
}

/// Writes `trace.csv`, `commands.csv` and `vehicles.csv` into `dir`.
///
/// # Safety
/// `trace` and `dir` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_trace_write(trace: *const GfTrace, dir: *const c_char) -> GfStatus {
    guard(|| {
        let t = as_ref(trace, "trace")?;
        report::write_trace(&t.inner, Path::new(as_str(dir, "dir")?))?;
        Ok(())
    })
}

/// # Safety
/// `trace` must come from [`gf_run`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_trace_free(trace: *mut GfTrace) {
    free(trace)
}

// -------------------------------------------------------------- coordinator

/// Control modes for [`GfControllerConfig::mode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfControlMode {
    Off = 0,
    Geofence = 1,
    SingleVehicle = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfPowertrain {
    Hybrid = 0,
    PureEv = 1,
    PureIce = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfMode {
    Polluting = 0,
    Electric = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfControllerConfig {
    pub tau_s: f64,
    pub switch_interval_s: f64,
    pub expiry_timeout_s: f64,
    pub allowable_limit_g_per_min: f64,
    pub actuation_latency_s: f64,
    pub radius_m: f64,
    pub force_detector_electric: u8,
    /// A [`GfControlMode`] value.
    pub mode: u8,
}

impl From<ControllerConfig> for GfControllerConfig {
    fn from(c: ControllerConfig) -> Self {
        Self {
            tau_s: c.tau_s,
            switch_interval_s: c.switch_interval_s,
            expiry_timeout_s: c.expiry_timeout_s,
            allowable_limit_g_per_min: c.allowable_limit_g_per_min,
            actuation_latency_s: c.actuation_latency_s,
            radius_m: c.radius_m,
            force_detector_electric: c.force_detector_electric as u8,
            mode: match c.mode {
                ControlMode::Off => GfControlMode::Off,
                ControlMode::Geofence => GfControlMode::Geofence,
                ControlMode::SingleVehicle => GfControlMode::SingleVehicle,
            } as u8,
        }
    }
}

fn controller_config(c: &GfControllerConfig) -> Result<ControllerConfig, Failure> {
    let mode = match c.mode {
        0 => ControlMode::Off,
        1 => ControlMode::Geofence,
        2 => ControlMode::SingleVehicle,
        other => {
            return fail(
                GfStatus::InvalidArgument,
                format!("unknown control mode {other}"),
            )
        }
    };
    Ok(ControllerConfig {
        tau_s: c.tau_s,
        switch_interval_s: c.switch_interval_s,
        expiry_timeout_s: c.expiry_timeout_s,
        allowable_limit_g_per_min: c.allowable_limit_g_per_min,
        actuation_latency_s: c.actuation_latency_s,
        radius_m: c.radius_m,
        force_detector_electric: c.force_detector_electric != 0,
        mode,
        ..ControllerConfig::default()
    })
}

/// A vehicle as reported to the coordinator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfVehicle {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub speed_kmh: f64,
    pub euro_class: u8,
    /// A [`GfPowertrain`] value.
    pub powertrain: u8,
    /// Edge the vehicle is on; NULL means unknown (density 1.0).
    pub edge_id: *const c_char,
}

/// A mode command produced by the coordinator.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GfCommand {
    pub vehicle_id: u32,
    pub mode: GfMode,
    pub issued_at: f64,
    pub effective_at: f64,
}

/// A stateful coordinator with its own coin-toss stream.
pub struct GfCoordinator {
    inner: Coordinator,
    density: BTreeMap<EdgeId, f64>,
    rng: SimRng,
    last_commands: Vec<ModeCommand>,
}

/// Fills `out` with the default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_controller_config_default(out: *mut GfControllerConfig) -> GfStatus {
    guard(|| write_out(out, ControllerConfig::default().into(), "out"))
}

/// Creates a coordinator. `table` may be NULL for the bundled table; it is
/// copied, so the caller keeps ownership.
///
/// # Safety
/// `config` must be valid; `table` valid or NULL; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_new(
    config: *const GfControllerConfig,
    table: *const GfCoefficientTable,
    seed: u64,
    out: *mut *mut GfCoordinator,
) -> GfStatus {
    guard(|| {
        let cfg = controller_config(as_ref(config, "config")?)?;
        let table = table
            .as_ref()
            .map_or_else(CoefficientTable::bundled, |t| t.inner.clone());
        let inner = Coordinator::new(cfg, table)?;
        write_out(
            out,
            boxed(GfCoordinator {
                inner,
                density: BTreeMap::new(),
                rng: rng::stream(seed, Stream::CoinToss),
                last_commands: Vec::new(),
            }),
            "out",
        )
    })
}

/// Sets the cyclist density weight (>= 1) for an edge.
///
/// # Safety
/// `coord` and `edge_id` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_set_density(
    coord: *mut GfCoordinator,
    edge_id: *const c_char,
    weight: f64,
) -> GfStatus {
    guard(|| {
        let c = as_mut(coord, "coordinator")?;
        let edge = as_str(edge_id, "edge_id")?;
        if !(weight >= 1.0 && weight.is_finite()) {
            return fail(
                GfStatus::InvalidArgument,
                format!("weight must be >= 1, got {weight}"),
            );
        }
        c.density.insert(EdgeId::new(edge), weight);
        Ok(())
    })
}

/// Reports a cyclist detection by vehicle `detector` at (`x`, `y`).
///
/// # Safety
/// `coord` and `cyclist_id` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_on_detection(
    coord: *mut GfCoordinator,
    cyclist_id: *const c_char,
    detector: u32,
    x: f64,
    y: f64,
    now: f64,
) -> GfStatus {
    guard(|| {
        let c = as_mut(coord, "coordinator")?;
        let id = CyclistId::new(as_str(cyclist_id, "cyclist_id")?);
        let p = Point::new(x, y);
        if !p.is_finite() || !now.is_finite() {
            return fail(
                GfStatus::InvalidArgument,
                "position and time must be finite",
            );
        }
        c.last_commands = c.inner.on_detection(&id, VehicleId(detector), p, now);
        Ok(())
    })
}

/// Removes fences idle for longer than the timeout.
///
/// # Safety
/// `coord` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_expire(coord: *mut GfCoordinator, now: f64) -> GfStatus {
    guard(|| {
        let c = as_mut(coord, "coordinator")?;
        c.last_commands = c.inner.expire(now);
        Ok(())
    })
}

unsafe fn fleet_from(
    vehicles: *const GfVehicle,
    count: usize,
) -> Result<Vec<FleetVehicle>, Failure> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if vehicles.is_null() {
        return fail(GfStatus::NullPointer, "vehicles is NULL");
    }
    std::slice::from_raw_parts(vehicles, count)
        .iter()
        .map(|v| {
            let edge = if v.edge_id.is_null() {
                EdgeId::new("")
            } else {
                EdgeId::new(as_str(v.edge_id, "edge_id")?)
            };
            Ok(FleetVehicle {
                id: VehicleId(v.id),
                position: Point::new(v.x, v.y),
                edge,
                speed_kmh: v.speed_kmh,
                class: VehicleClass::new(v.euro_class)?,
                powertrain: match v.powertrain {
                    0 => Powertrain::Hybrid,
                    1 => Powertrain::PureEv,
                    2 => Powertrain::PureIce,
                    other => {
                        return fail(
                            GfStatus::InvalidArgument,
                            format!("unknown powertrain {other}"),
                        )
                    }
                },
            })
        })
        .collect()
}

/// One control tick over the current fleet with the measured background
/// level (g/min). Results are read with [`gf_coordinator_command`].
///
/// # Safety
/// `coord` must be valid; `vehicles` must point to `count` entries.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_tick(
    coord: *mut GfCoordinator,
    now: f64,
    vehicles: *const GfVehicle,
    count: usize,
    background_level: f64,
) -> GfStatus {
    guard(|| {
        let c = as_mut(coord, "coordinator")?;
        let fleet = fleet_from(vehicles, count)?;
        let reading =
            BackgroundReading::new(background_level, c.inner.config().allowable_limit_g_per_min);
        let report = c
            .inner
            .tick(now, &fleet, &c.density, &reading, &mut c.rng)?;
        c.last_commands = report.commands;
        Ok(())
    })
}

/// Number of commands produced by the last detection, expire or tick call.
///
/// # Safety
/// `coord` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_command_count(coord: *const GfCoordinator) -> usize {
    coord.as_ref().map_or(0, |c| c.last_commands.len())
}

/// # Safety
/// `coord` must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_command(
    coord: *const GfCoordinator,
    index: usize,
    out: *mut GfCommand,
) -> GfStatus {
    guard(|| {
        let c = as_ref(coord, "coordinator")?;
        let Some(cmd) = c.last_commands.get(index) else {
            return fail(
                GfStatus::OutOfRange,
                format!("command {index} out of range"),
            );
        };
        write_out(
            out,
            GfCommand {
                vehicle_id: cmd.vehicle_id.0,
                mode: match cmd.mode {
                    Mode::Polluting => GfMode::Polluting,
                    Mode::Electric => GfMode::Electric,
                },
                issued_at: cmd.issued_at,
                effective_at: cmd.effective_at,
            },
            "out",
        )
    })
}

/// Number of live fences.
///
/// # Safety
/// `coord` must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_fence_count(coord: *const GfCoordinator) -> usize {
    coord.as_ref().map_or(0, |c| c.inner.fences().len())
}

/// Writes the full command log as CSV to `path`.
///
/// # Safety
/// `coord` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_write_command_log(
    coord: *const GfCoordinator,
    path: *const c_char,
) -> GfStatus {
    guard(|| {
        let c = as_ref(coord, "coordinator")?;
        let path = as_str(path, "path")?;
        let csv = report::command_log_csv(c.inner.command_log())?;
        std::fs::write(path, csv).or_else(|e| fail(GfStatus::Io, format!("{path}: {e}")))
    })
}

/// # Safety
/// `coord` must come from [`gf_coordinator_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn gf_coordinator_free(coord: *mut GfCoordinator) {
    free(coord)
}
