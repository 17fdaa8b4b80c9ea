//! Desk-scale traffic microsimulation driving the coordinator.
//!
//! Vehicles and cyclists follow fixed routes at constant speed; there is no
//! car-following, lane changing or signal control. Detection is a plain
//! distance test standing in for a short-range tag reader.

pub mod network;
pub mod run;
pub mod scenario;
pub mod world;

pub use network::{Edge, RoadNetwork};
pub use run::{run, run_baseline, ScenarioTrace, Simulation, TraceRow, VehicleRow};
pub use scenario::{CyclistSpawn, Flow, Scenario, SimSettings, VehicleSpawn};
pub use world::{CyclistState, DetectionEvent, RouteCursor, VehicleState, World};
