//! Geofence lifecycle and probabilistic mode commands.
//!
//! A fence is created (or re-centred) on every detection of a cyclist tag,
//! at the position of the vehicle that saw it. Every `tau` seconds the
//! vehicles inside an active fence are re-optimized against the current
//! emission limit, and every `switch_interval` seconds each of them tosses
//! a coin weighted by its polluting probability. A fence without detections
//! for longer than `expiry_timeout` is dropped and its members go back to
//! polluting mode.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emission::{vehicle_emission_rate, CoefficientTable, PollutantKind, VehicleClass};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ids::{CyclistId, EdgeId, VehicleId};
use crate::optimizer::{solve, Assignment, GeofenceProblem, ProblemEntry};

/// Slack for comparing simulation times against cadence boundaries.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Polluting,
    Electric,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Polluting => "Polluting",
            Mode::Electric => "Electric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Powertrain {
    #[default]
    Hybrid,
    PureEv,
    PureIce,
}

impl Powertrain {
    /// Mode a freshly spawned vehicle starts in.
    pub fn initial_mode(self) -> Mode {
        match self {
            Powertrain::PureEv => Mode::Electric,
            Powertrain::Hybrid | Powertrain::PureIce => Mode::Polluting,
        }
    }

    /// Whether the powertrain can enact `mode`. Commands it cannot enact are ignored.
    pub fn supports(self, mode: Mode) -> bool {
        match self {
            Powertrain::Hybrid => true,
            Powertrain::PureEv => mode == Mode::Electric,
            Powertrain::PureIce => mode == Mode::Polluting,
        }
    }
}

/// A commanded switch that has not taken effect yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingSwitch {
    pub mode: Mode,
    pub pending_since: f64,
    pub effective_at: f64,
}

/// Current engine mode of one vehicle plus at most one pending switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleMode {
    current: Mode,
    pending: Option<PendingSwitch>,
}

impl VehicleMode {
    pub fn new(mode: Mode) -> Self {
        Self {
            current: mode,
            pending: None,
        }
    }

    pub fn current(&self) -> Mode {
        self.current
    }

    pub fn pending(&self) -> Option<PendingSwitch> {
        self.pending
    }

    /// Queues a switch; a newer command replaces an older pending one.
    pub fn schedule(&mut self, mode: Mode, issued_at: f64, effective_at: f64) {
        self.pending = Some(PendingSwitch {
            mode,
            pending_since: issued_at,
            effective_at,
        });
    }

    /// Applies the pending switch if it is due. Returns true if the mode changed.
    pub fn apply_due(&mut self, now: f64) -> bool {
        match self.pending {
            Some(p) if p.effective_at <= now + TIME_EPS => {
                self.pending = None;
                let changed = self.current != p.mode;
                self.current = p.mode;
                changed
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Fences are tracked but nobody is commanded (the "before" baseline).
    Off,
    /// Multi-vehicle fence optimization.
    #[default]
    Geofence,
    /// Only the detecting vehicle goes electric, for `expiry_timeout` after its last detection.
    SingleVehicle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Seconds between optimizations.
    pub tau_s: f64,
    /// Seconds between coin tosses.
    pub switch_interval_s: f64,
    /// A fence is dropped once this long has passed since its last detection.
    pub expiry_timeout_s: f64,
    /// Allowable aggregate emission rate inside a fence, g/min.
    pub allowable_limit_g_per_min: f64,
    /// Delay between issuing a mode command and the vehicle enacting it.
    pub actuation_latency_s: f64,
    pub radius_m: f64,
    /// Command the vehicle that made the latest detection to electric outright.
    pub force_detector_electric: bool,
    pub mode: ControlMode,
    pub pollutant: PollutantKind,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tau_s: 1.0,
            switch_interval_s: 1.0,
            expiry_timeout_s: 20.0,
            allowable_limit_g_per_min: 1.0,
            actuation_latency_s: 0.0,
            radius_m: 100.0,
            force_detector_electric: false,
            mode: ControlMode::Geofence,
            pollutant: PollutantKind::Co,
        }
    }
}

impl ControllerConfig {
    /// Real-vehicle emulation: commands take 5 s to act, so decisions run every 5 s.
    pub fn hil_emulation() -> Self {
        Self {
            tau_s: 5.0,
            switch_interval_s: 5.0,
            actuation_latency_s: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (
                self.tau_s > 0.0 && self.tau_s.is_finite(),
                "tau_s must be > 0",
            ),
            (
                self.switch_interval_s > 0.0 && self.switch_interval_s.is_finite(),
                "switch_interval_s must be > 0",
            ),
            (
                self.expiry_timeout_s > 0.0 && self.expiry_timeout_s.is_finite(),
                "expiry_timeout_s must be > 0",
            ),
            (
                self.actuation_latency_s >= 0.0 && self.actuation_latency_s.is_finite(),
                "actuation_latency_s must be >= 0",
            ),
            (
                self.radius_m > 0.0 && self.radius_m.is_finite(),
                "radius_m must be > 0",
            ),
            (
                self.allowable_limit_g_per_min.is_finite(),
                "allowable_limit_g_per_min must be finite",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Domain(msg.to_string())),
            None => Ok(()),
        }
    }
}

/// Background pollution seen inside the fence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundReading {
    /// Background contribution, g/min equivalent.
    pub level: f64,
    /// Level minus the allowable limit, g/min.
    pub delta: f64,
}

impl BackgroundReading {
    pub fn new(level: f64, allowable_limit: f64) -> Self {
        Self {
            level,
            delta: level - allowable_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSample {
    pub time_s: f64,
    pub level: f64,
}

/// Background level over time. A series is held piecewise constant from
/// each sample; times before the first sample use the first level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Background {
    Constant(f64),
    Series(Vec<BackgroundSample>),
}

impl Default for Background {
    fn default() -> Self {
        Background::Constant(0.0)
    }
}

impl Background {
    /// Builds a series, requiring strictly increasing times and finite levels.
    pub fn series(samples: Vec<BackgroundSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("background series is empty".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.time_s.is_finite() || !s.level.is_finite() {
                return Err(Error::Domain(format!(
                    "background sample {i} is not finite"
                )));
            }
            if i > 0 && s.time_s <= samples[i - 1].time_s {
                return Err(Error::Domain(format!(
                    "background sample {i}: times must be strictly increasing"
                )));
            }
        }
        Ok(Background::Series(samples))
    }

    pub fn level_at(&self, t: f64) -> f64 {
        match self {
            Background::Constant(level) => *level,
            Background::Series(samples) => {
                let idx = samples.partition_point(|s| s.time_s <= t + TIME_EPS);
                samples[idx.saturating_sub(1)].level
            }
        }
    }

    pub fn reading_at(&self, t: f64, allowable_limit: f64) -> BackgroundReading {
        BackgroundReading::new(self.level_at(t), allowable_limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geofence {
    /// The cyclist tag that created the fence.
    pub id: CyclistId,
    pub center: Point,
    pub radius: f64,
    pub created_at: f64,
    pub last_detection_at: f64,
    /// Vehicle that made the latest detection.
    pub last_detector: Option<VehicleId>,
    pub member_ids: BTreeSet<VehicleId>,
}

impl Geofence {
    pub fn new(id: CyclistId, center: Point, radius: f64, now: f64) -> Self {
        Self {
            id,
            center,
            radius,
            created_at: now,
            last_detection_at: now,
            last_detector: None,
            member_ids: BTreeSet::new(),
        }
    }

    /// Active while no more than `expiry_timeout` has passed since the last detection.
    pub fn is_active(&self, now: f64, expiry_timeout: f64) -> bool {
        now - self.last_detection_at <= expiry_timeout + TIME_EPS
    }

    pub fn contains(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius
    }
}

pub type Fences = BTreeMap<CyclistId, Geofence>;

/// What the controller may ask a vehicle, mirroring what the vehicle reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetVehicle {
    pub id: VehicleId,
    pub position: Point,
    pub edge: EdgeId,
    pub speed_kmh: f64,
    pub class: VehicleClass,
    pub powertrain: Powertrain,
}

/// Cyclist density weight of a road edge; unknown edges weigh 1.
pub trait DensityLookup {
    fn density_weight(&self, edge: &EdgeId) -> f64;
}

impl DensityLookup for HashMap<EdgeId, f64> {
    fn density_weight(&self, edge: &EdgeId) -> f64 {
        self.get(edge).copied().unwrap_or(1.0)
    }
}

impl DensityLookup for BTreeMap<EdgeId, f64> {
    fn density_weight(&self, edge: &EdgeId) -> f64 {
        self.get(edge).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCommand {
    pub vehicle_id: VehicleId,
    pub mode: Mode,
    pub issued_at: f64,
    pub effective_at: f64,
}

/// One row of the command log. Restore commands (fence expiry, leaving all
/// fences, single-vehicle timeouts) leave the optimization fields empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub sim_time: f64,
    pub fence_id: String,
    pub vehicle_id: VehicleId,
    pub d_i: Option<f64>,
    pub e_i: Option<f64>,
    pub x_i: Option<f64>,
    pub draw: Option<f64>,
    pub commanded_mode: Mode,
    pub effective_time: f64,
}

impl CommandRecord {
    pub fn command(&self) -> ModeCommand {
        ModeCommand {
            vehicle_id: self.vehicle_id,
            mode: self.commanded_mode,
            issued_at: self.sim_time,
            effective_at: self.effective_time,
        }
    }
}

/// Result of one optimization + coin toss over a fence.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub fence_id: CyclistId,
    pub limit: f64,
    pub problem: GeofenceProblem,
    pub assignment: Assignment,
    pub records: Vec<CommandRecord>,
}

impl TickOutcome {
    /// Expected in-fence emission rate, `sum x_i e_i`.
    pub fn expected_emission(&self) -> f64 {
        self.assignment.expected_emission(&self.problem)
    }
}

/// Creates a fence for `cyclist_id` at `position`, or re-centres the existing one.
pub fn on_detection<'a>(
    fences: &'a mut Fences,
    cyclist_id: &CyclistId,
    detector: Option<VehicleId>,
    position: Point,
    now: f64,
    config: &ControllerConfig,
) -> &'a Geofence {
    let fence = fences
        .entry(cyclist_id.clone())
        .or_insert_with(|| Geofence::new(cyclist_id.clone(), position, config.radius_m, now));
    fence.center = position;
    fence.last_detection_at = fence.last_detection_at.max(now);
    fence.last_detector = detector;
    fence
}

/// Removes fences idle for longer than the timeout and returns them.
pub fn expire(fences: &mut Fences, now: f64, config: &ControllerConfig) -> Vec<Geofence> {
    let stale: Vec<CyclistId> = fences
        .values()
        .filter(|f| !f.is_active(now, config.expiry_timeout_s))
        .map(|f| f.id.clone())
        .collect();
    stale
        .into_iter()
        .filter_map(|id| fences.remove(&id))
        .collect()
}

/// Vehicles within the fence radius (boundary inclusive).
pub fn members(fence: &Geofence, vehicles: &[FleetVehicle]) -> BTreeSet<VehicleId> {
    vehicles
        .iter()
        .filter(|v| fence.contains(v.position))
        .map(|v| v.id)
        .collect()
}

/// Emission budget: allowable limit minus background. May be negative.
pub fn compute_limit(config: &ControllerConfig, background: &BackgroundReading) -> f64 {
    config.allowable_limit_g_per_min - background.level
}

/// Weighted coin toss: polluting when `u < x` for `u ~ U[0, 1)`.
pub fn coin_toss<R: Rng + ?Sized>(x: f64, rng: &mut R) -> (f64, Mode) {
    let u: f64 = rng.random();
    let mode = if u < x {
        Mode::Polluting
    } else {
        Mode::Electric
    };
    (u, mode)
}

/// Polluting-mode emission rate the controller attributes to a vehicle.
pub fn controller_emission_rate(
    vehicle: &FleetVehicle,
    table: &CoefficientTable,
    pollutant: PollutantKind,
) -> Result<f64> {
    match vehicle.powertrain {
        Powertrain::PureEv => Ok(0.0),
        Powertrain::Hybrid | Powertrain::PureIce => {
            vehicle_emission_rate(vehicle.class, pollutant, vehicle.speed_kmh, table)
        }
    }
}

/// Builds the optimization problem for the given fence members.
///
/// With `force_detector_electric`, the latest detector is left out so it can
/// be commanded electric directly.
pub fn build_problem(
    fence: &Geofence,
    member_vehicles: &[&FleetVehicle],
    density: &dyn DensityLookup,
    table: &CoefficientTable,
    config: &ControllerConfig,
    limit: f64,
) -> Result<GeofenceProblem> {
    let mut entries = Vec::with_capacity(member_vehicles.len());
    for v in member_vehicles {
        if config.force_detector_electric && fence.last_detector == Some(v.id) {
            continue;
        }
        let e = controller_emission_rate(v, table, config.pollutant)?;
        entries.push(ProblemEntry::new(v.id, density.density_weight(&v.edge), e));
    }
    GeofenceProblem::new(entries, limit)
}

fn toss_members<R: Rng + ?Sized>(
    fence: &Geofence,
    problem: &GeofenceProblem,
    assignment: &Assignment,
    present: &BTreeSet<VehicleId>,
    now: f64,
    config: &ControllerConfig,
    rng: &mut R,
) -> Vec<CommandRecord> {
    let effective_time = now + config.actuation_latency_s;
    let mut entries: Vec<&ProblemEntry> = problem
        .entries()
        .iter()
        .filter(|e| present.contains(&e.vehicle_id))
        .collect();
    entries.sort_by_key(|e| e.vehicle_id);
    let mut records: Vec<CommandRecord> = entries
        .into_iter()
        .map(|entry| {
            let x = assignment.get(entry.vehicle_id).unwrap_or(0.0);
            let (u, mode) = coin_toss(x, rng);
            CommandRecord {
                sim_time: now,
                fence_id: fence.id.to_string(),
                vehicle_id: entry.vehicle_id,
                d_i: Some(entry.density),
                e_i: Some(entry.emission),
                x_i: Some(x),
                draw: Some(u),
                commanded_mode: mode,
                effective_time,
            }
        })
        .collect();
    if config.force_detector_electric {
        if let Some(detector) = fence.last_detector.filter(|d| present.contains(d)) {
            records.push(CommandRecord {
                sim_time: now,
                fence_id: fence.id.to_string(),
                vehicle_id: detector,
                d_i: None,
                e_i: None,
                x_i: Some(0.0),
                draw: None,
                commanded_mode: Mode::Electric,
                effective_time,
            });
        }
    }
    records
}

/// One optimization and coin toss for the members of `fence`.
///
/// Draws come from `rng` in ascending vehicle id order, one per member.
#[allow(clippy::too_many_arguments)]
pub fn decision_tick<R: Rng + ?Sized>(
    fence: &Geofence,
    vehicles: &[FleetVehicle],
    density: &dyn DensityLookup,
    table: &CoefficientTable,
    config: &ControllerConfig,
    background: &BackgroundReading,
    now: f64,
    rng: &mut R,
) -> Result<TickOutcome> {
    let member_ids = members(fence, vehicles);
    let member_vehicles: Vec<&FleetVehicle> = vehicles
        .iter()
        .filter(|v| member_ids.contains(&v.id))
        .collect();
    let limit = compute_limit(config, background);
    let problem = build_problem(fence, &member_vehicles, density, table, config, limit)?;
    let assignment = solve(&problem);
    let records = toss_members(fence, &problem, &assignment, &member_ids, now, config, rng);
    Ok(TickOutcome {
        fence_id: fence.id.clone(),
        limit,
        problem,
        assignment,
        records,
    })
}

/// Mode of a vehicle in single-vehicle operation: electric from a detection
/// until `expiry_timeout` has passed without another one.
pub fn single_vehicle_tick(
    last_detection: Option<f64>,
    now: f64,
    config: &ControllerConfig,
) -> Mode {
    match last_detection {
        Some(t) if now - t <= config.expiry_timeout_s + TIME_EPS => Mode::Electric,
        _ => Mode::Polluting,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FenceSchedule {
    last_decision_at: Option<f64>,
    last_toss_at: Option<f64>,
    decision: Option<(GeofenceProblem, Assignment, f64)>,
}

/// Summary of one fence decision taken during [`Coordinator::tick`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FenceDecision {
    pub fence_id: CyclistId,
    pub sim_time: f64,
    pub limit: f64,
    pub expected_emission: f64,
    pub member_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub commands: Vec<ModeCommand>,
    pub decisions: Vec<FenceDecision>,
}

/// The single decision authority: owns fences, schedules and the command log.
///
/// All mutation goes through `&mut self`, so callers serialize detections,
/// expiries and ticks. The whole value is `Send` and can move between threads.
#[derive(Debug, Clone)]
pub struct Coordinator {
    config: ControllerConfig,
    table: CoefficientTable,
    fences: Fences,
    schedules: BTreeMap<CyclistId, FenceSchedule>,
    controlled: BTreeSet<VehicleId>,
    single_vehicle: BTreeMap<VehicleId, f64>,
    log: Vec<CommandRecord>,
}

impl Coordinator {
    pub fn new(config: ControllerConfig, table: CoefficientTable) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            table,
            fences: Fences::new(),
            schedules: BTreeMap::new(),
            controlled: BTreeSet::new(),
            single_vehicle: BTreeMap::new(),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn fences(&self) -> &Fences {
        &self.fences
    }

    pub fn command_log(&self) -> &[CommandRecord] {
        &self.log
    }

    pub fn take_command_log(&mut self) -> Vec<CommandRecord> {
        std::mem::take(&mut self.log)
    }

    /// Handles a detection event. Returns commands in single-vehicle mode.
    pub fn on_detection(
        &mut self,
        cyclist_id: &CyclistId,
        detector: VehicleId,
        position: Point,
        now: f64,
    ) -> Vec<ModeCommand> {
        on_detection(
            &mut self.fences,
            cyclist_id,
            Some(detector),
            position,
            now,
            &self.config,
        );
        self.schedules
            .entry(cyclist_id.clone())
            .or_insert(FenceSchedule {
                last_decision_at: None,
                last_toss_at: None,
                decision: None,
            });
        if self.config.mode != ControlMode::SingleVehicle {
            return Vec::new();
        }
        let newly = !self.single_vehicle.contains_key(&detector);
        self.single_vehicle.insert(detector, now);
        if !newly {
            return Vec::new();
        }
        let record = CommandRecord {
            sim_time: now,
            fence_id: cyclist_id.to_string(),
            vehicle_id: detector,
            d_i: None,
            e_i: None,
            x_i: None,
            draw: None,
            commanded_mode: single_vehicle_tick(Some(now), now, &self.config),
            effective_time: now + self.config.actuation_latency_s,
        };
        let cmd = record.command();
        self.log.push(record);
        vec![cmd]
    }

    /// Drops idle fences and single-vehicle timers; returns restore commands.
    pub fn expire(&mut self, now: f64) -> Vec<ModeCommand> {
        let removed = expire(&mut self.fences, now, &self.config);
        let mut restore: BTreeMap<VehicleId, String> = BTreeMap::new();
        for fence in &removed {
            self.schedules.remove(&fence.id);
            for id in &fence.member_ids {
                if self.controlled.remove(id) {
                    restore.entry(*id).or_insert_with(|| fence.id.to_string());
                }
            }
        }
        let timed_out: Vec<VehicleId> = self
            .single_vehicle
            .iter()
            .filter(|(_, &t)| single_vehicle_tick(Some(t), now, &self.config) == Mode::Polluting)
            .map(|(&id, _)| id)
            .collect();
        for id in timed_out {
            self.single_vehicle.remove(&id);
            restore.entry(id).or_default();
        }
        self.restore_commands(restore, now)
    }

    /// Vehicles leaving or losing their fence are restored from the next tick on.
    fn restore_commands(
        &mut self,
        restore: BTreeMap<VehicleId, String>,
        now: f64,
    ) -> Vec<ModeCommand> {
        let effective_time = now + self.config.actuation_latency_s;
        restore
            .into_iter()
            .map(|(vehicle_id, fence_id)| {
                let record = CommandRecord {
                    sim_time: now,
                    fence_id,
                    vehicle_id,
                    d_i: None,
                    e_i: None,
                    x_i: None,
                    draw: None,
                    commanded_mode: Mode::Polluting,
                    effective_time,
                };
                let cmd = record.command();
                self.log.push(record);
                cmd
            })
            .collect()
    }

    /// Recomputes memberships and, where due, re-optimizes and tosses coins.
    ///
    /// Fences are processed in ascending cyclist id; a vehicle inside several
    /// fences is controlled by the first only. Nothing is commanded unless the
    /// control mode is [`ControlMode::Geofence`].
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        fleet: &[FleetVehicle],
        density: &dyn DensityLookup,
        background: &BackgroundReading,
        rng: &mut R,
    ) -> Result<TickReport> {
        let mut claimed: BTreeSet<VehicleId> = BTreeSet::new();
        for fence in self.fences.values_mut() {
            fence.member_ids = members(fence, fleet);
        }
        if self.config.mode != ControlMode::Geofence {
            return Ok(TickReport::default());
        }

        let mut report = TickReport::default();
        let fence_ids: Vec<CyclistId> = self.fences.keys().cloned().collect();
        for fence_id in fence_ids {
            let fence = &self.fences[&fence_id];
            if !fence.is_active(now, self.config.expiry_timeout_s) {
                continue;
            }
            let own: BTreeSet<VehicleId> = fence
                .member_ids
                .iter()
                .filter(|id| !claimed.contains(id))
                .copied()
                .collect();
            claimed.extend(own.iter().copied());

            let schedule = self
                .schedules
                .entry(fence_id.clone())
                .or_insert(FenceSchedule {
                    last_decision_at: None,
                    last_toss_at: None,
                    decision: None,
                });
            let decision_due = schedule
                .last_decision_at
                .is_none_or(|t| now - t >= self.config.tau_s - TIME_EPS);
            if decision_due {
                let member_vehicles: Vec<&FleetVehicle> =
                    fleet.iter().filter(|v| own.contains(&v.id)).collect();
                let limit = compute_limit(&self.config, background);
                let problem = build_problem(
                    fence,
                    &member_vehicles,
                    density,
                    &self.table,
                    &self.config,
                    limit,
                )?;
                let assignment = solve(&problem);
                report.decisions.push(FenceDecision {
                    fence_id: fence_id.clone(),
                    sim_time: now,
                    limit,
                    expected_emission: assignment.expected_emission(&problem),
                    member_count: own.len(),
                });
                schedule.decision = Some((problem, assignment, limit));
                schedule.last_decision_at = Some(now);
            }
            let toss_due = schedule
                .last_toss_at
                .is_none_or(|t| now - t >= self.config.switch_interval_s - TIME_EPS);
            if toss_due {
                if let Some((problem, assignment, _)) = &schedule.decision {
                    let records =
                        toss_members(fence, problem, assignment, &own, now, &self.config, rng);
                    for record in records {
                        self.controlled.insert(record.vehicle_id);
                        report.commands.push(record.command());
                        self.log.push(record);
                    }
                }
                schedule.last_toss_at = Some(now);
            }
        }

        let departed: BTreeMap<VehicleId, String> = self
            .controlled
            .iter()
            .filter(|id| !claimed.contains(id))
            .map(|&id| (id, String::new()))
            .collect();
        for id in departed.keys() {
            self.controlled.remove(id);
        }
        report.commands.extend(self.restore_commands(departed, now));
        Ok(report)
    }

    /// Forget a vehicle that left the network.
    pub fn forget_vehicle(&mut self, id: VehicleId) {
        self.controlled.remove(&id);
        self.single_vehicle.remove(&id);
    }
}
