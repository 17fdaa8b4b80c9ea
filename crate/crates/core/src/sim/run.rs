use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coordinator::{
    compute_limit, members, CommandRecord, ControlMode, Coordinator, Mode, ModeCommand, Powertrain,
    VehicleMode,
};
use crate::emission::VehicleClass;
use crate::error::Result;
use crate::ids::{EdgeId, VehicleId};
use crate::rng::{self, SimRng, Stream};
use crate::sim::scenario::Scenario;
use crate::sim::world::{CyclistState, RouteCursor, VehicleState, World};

/// One row per simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub sim_time: f64,
    /// Active fence ids joined by `;`.
    pub fence_ids: String,
    pub fence_x: Option<f64>,
    pub fence_y: Option<f64>,
    pub member_count: usize,
    pub vehicle_count: usize,
    pub polluting_count: usize,
    pub in_fence_rate: f64,
    pub out_of_fence_rate: f64,
    pub total_rate: f64,
    /// Emission budget E(Δ) = allowable limit - background level.
    pub budget: f64,
    /// Expected in-fence rate `sum x_i e_i` of decisions taken this step.
    pub expected_rate: Option<f64>,
}

impl TraceRow {
    pub fn fence_active(&self) -> bool {
        !self.fence_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub sim_time: f64,
    pub vehicle_id: VehicleId,
    pub edge: EdgeId,
    pub x: f64,
    pub y: f64,
    pub speed_kmh: f64,
    pub euro_class: u8,
    pub powertrain: Powertrain,
    pub mode: Mode,
    pub in_fence: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioTrace {
    pub rows: Vec<TraceRow>,
    pub vehicles: Vec<VehicleRow>,
    pub commands: Vec<CommandRecord>,
    pub decision_count: usize,
    pub mode_switches: u64,
}

impl ScenarioTrace {
    pub fn fence_rows(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.fence_active())
    }

    /// Mean in-fence rate over steps with an active fence (0 if none).
    pub fn mean_in_fence_rate(&self) -> f64 {
        let (sum, n) = self
            .fence_rows()
            .fold((0.0, 0usize), |(s, n), r| (s + r.in_fence_rate, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn max_in_fence_rate(&self) -> f64 {
        self.fence_rows()
            .map(|r| r.in_fence_rate)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
struct PlannedSpawn {
    id: VehicleId,
    time_s: f64,
    route: Vec<usize>,
    class: VehicleClass,
    speed_kmh: Option<f64>,
    powertrain: Powertrain,
}

fn random_class(rng: &mut SimRng) -> VehicleClass {
    VehicleClass::new(rng.random_range(VehicleClass::MIN..=VehicleClass::MAX))
        .expect("range is within class bounds")
}

/// Expands explicit spawns and flows into one time-ordered list with ids
/// assigned from 1 in spawn order.
fn plan_spawns(scenario: &Scenario, rng: &mut SimRng) -> Result<Vec<PlannedSpawn>> {
    let mut planned = Vec::new();
    for v in &scenario.vehicles {
        let class = match v.class {
            Some(c) => c,
            None => random_class(rng),
        };
        planned.push(PlannedSpawn {
            id: VehicleId(0),
            time_s: v.time_s,
            route: scenario.network.resolve_route(&v.route)?,
            class,
            speed_kmh: v.speed_kmh,
            powertrain: v.powertrain,
        });
    }
    for f in &scenario.flows {
        let route = scenario.network.resolve_route(&f.route)?;
        for t in f.times() {
            let class = match f.class {
                Some(c) => c,
                None => random_class(rng),
            };
            let jitter = if f.jitter_s > 0.0 {
                rng.random_range(0.0..f.jitter_s)
            } else {
                0.0
            };
            planned.push(PlannedSpawn {
                id: VehicleId(0),
                time_s: t + jitter,
                route: route.clone(),
                class,
                speed_kmh: f.speed_kmh,
                powertrain: f.powertrain,
            });
        }
    }
    planned.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    for (i, p) in planned.iter_mut().enumerate() {
        p.id = VehicleId(i as u32 + 1);
    }
    Ok(planned)
}

/// A scenario being stepped. Owns the world, the coordinator and both
/// random streams; everything is `Send`.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    world: World,
    coordinator: Coordinator,
    coin_rng: SimRng,
    spawns: Vec<PlannedSpawn>,
    next_spawn: usize,
    pending_cyclists: Vec<usize>,
    step_index: usize,
    trace: ScenarioTrace,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let mut spawn_rng = rng::stream(seed, Stream::Spawn);
        let spawns = plan_spawns(scenario, &mut spawn_rng)?;
        for c in &scenario.cyclists {
            scenario.network.resolve_route(&c.route)?;
        }
        let coordinator = Coordinator::new(scenario.controller.clone(), scenario.table.clone())?;
        Ok(Self {
            world: World::new(Arc::new(scenario.network.clone())),
            scenario: scenario.clone(),
            coordinator,
            coin_rng: rng::stream(seed, Stream::CoinToss),
            spawns,
            next_spawn: 0,
            pending_cyclists: (0..scenario.cyclists.len()).collect(),
            step_index: 0,
            trace: ScenarioTrace::default(),
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.scenario.simulation.step_count()
    }

    pub fn trace(&self) -> &ScenarioTrace {
        &self.trace
    }

    fn apply(&mut self, commands: &[ModeCommand]) {
        for c in commands {
            self.world.apply_command(c);
        }
    }

    fn spawn_due(&mut self, now: f64) {
        while let Some(p) = self.spawns.get(self.next_spawn) {
            if p.time_s >= now - 1e-9 {
                break;
            }
            self.world.add_vehicle(VehicleState {
                id: p.id,
                class: p.class,
                powertrain: p.powertrain,
                cursor: RouteCursor::new(p.route.clone()),
                speed_override_kmh: p.speed_kmh,
                mode: VehicleMode::new(p.powertrain.initial_mode()),
            });
            self.next_spawn += 1;
        }
        let network = &self.scenario.network;
        let cyclists = &self.scenario.cyclists;
        let world = &mut self.world;
        self.pending_cyclists.retain(|&i| {
            let c = &cyclists[i];
            if c.start_s >= now - 1e-9 {
                return true;
            }
            let route = network
                .resolve_route(&c.route)
                .expect("validated at construction");
            world.add_cyclist(CyclistState {
                id: c.id.clone(),
                cursor: RouteCursor::new(route),
                speed_kmh: c.speed_kmh,
            });
            false
        });
    }

    /// Runs one step: spawn, move, detect, expire, decide, record.
    pub fn step(&mut self) -> Result<Option<&TraceRow>> {
        if self.is_finished() {
            return Ok(None);
        }
        let dt = self.scenario.simulation.dt_s;
        self.step_index += 1;
        let now = self.step_index as f64 * dt;

        self.spawn_due(now);
        for id in self.world.step(dt)? {
            self.coordinator.forget_vehicle(id);
        }

        for event in self
            .world
            .detect(self.scenario.simulation.detection_range_m)?
        {
            let position = self
                .world
                .position_of(event.vehicle_id)
                .expect("detected vehicle exists");
            let cmds =
                self.coordinator
                    .on_detection(&event.cyclist_id, event.vehicle_id, position, now);
            self.apply(&cmds);
        }
        let cmds = self.coordinator.expire(now);
        self.apply(&cmds);

        let fleet = self.world.fleet();
        let limit_ref = self.scenario.controller.allowable_limit_g_per_min;
        let background = self.scenario.background.reading_at(now, limit_ref);
        let report = self.coordinator.tick(
            now,
            &fleet,
            &self.scenario.network,
            &background,
            &mut self.coin_rng,
        )?;
        self.apply(&report.commands);
        self.world.apply_due();
        self.trace.decision_count += report.decisions.len();

        let in_fence: BTreeSet<VehicleId> = self
            .coordinator
            .fences()
            .values()
            .flat_map(|f| members(f, &fleet))
            .collect();
        let table = &self.scenario.table;
        let pollutant = self.scenario.controller.pollutant;
        let mut in_rate = 0.0;
        let mut out_rate = 0.0;
        let mut polluting = 0;
        for v in self.world.vehicles() {
            let r = self.world.emission_rate_of(v, table, pollutant)?;
            if v.mode.current() == Mode::Polluting {
                polluting += 1;
            }
            if in_fence.contains(&v.id) {
                in_rate += r;
            } else {
                out_rate += r;
            }
        }
        let total = self.world.aggregate_emission_rate(table, pollutant, None)?;

        let fences = self.coordinator.fences();
        let first = fences.values().next();
        self.trace.rows.push(TraceRow {
            sim_time: now,
            fence_ids: fences
                .keys()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(";"),
            fence_x: first.map(|f| f.center.x),
            fence_y: first.map(|f| f.center.y),
            member_count: in_fence.len(),
            vehicle_count: fleet.len(),
            polluting_count: polluting,
            in_fence_rate: in_rate,
            out_of_fence_rate: out_rate,
            total_rate: total,
            budget: compute_limit(self.coordinator.config(), &background),
            expected_rate: if report.decisions.is_empty() {
                None
            } else {
                Some(report.decisions.iter().map(|d| d.expected_emission).sum())
            },
        });
        for (fv, v) in fleet.iter().zip(self.world.vehicles()) {
            self.trace.vehicles.push(VehicleRow {
                sim_time: now,
                vehicle_id: v.id,
                edge: fv.edge.clone(),
                x: fv.position.x,
                y: fv.position.y,
                speed_kmh: fv.speed_kmh,
                euro_class: v.class.get(),
                powertrain: v.powertrain,
                mode: v.mode.current(),
                in_fence: in_fence.contains(&v.id),
            });
        }
        Ok(self.trace.rows.last())
    }

    pub fn finish(mut self) -> Result<ScenarioTrace> {
        while !self.is_finished() {
            self.step()?;
        }
        self.trace.commands = self.coordinator.take_command_log();
        self.trace.mode_switches = self.world.mode_switches();
        Ok(self.trace)
    }
}

/// Runs a scenario to its horizon. Fully determined by `(scenario, seed)`.
pub fn run(scenario: &Scenario, seed: u64) -> Result<ScenarioTrace> {
    Simulation::new(scenario, seed)?.finish()
}

/// Runs with the controller forced off, keeping fences for measurement only.
pub fn run_baseline(scenario: &Scenario, seed: u64) -> Result<ScenarioTrace> {
    let mut s = scenario.clone();
    s.controller.mode = ControlMode::Off;
    run(&s, seed)
}
