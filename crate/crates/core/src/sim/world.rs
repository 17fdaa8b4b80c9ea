use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coordinator::{FleetVehicle, Mode, ModeCommand, Powertrain, VehicleMode};
use crate::emission::{vehicle_emission_rate, CoefficientTable, PollutantKind, VehicleClass};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ids::{CyclistId, VehicleId};
use crate::sim::network::RoadNetwork;

/// Position along a route: which leg, and how far along that leg's edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteCursor {
    route: Vec<usize>,
    leg: usize,
    offset: f64,
}

impl RouteCursor {
    pub fn new(route: Vec<usize>) -> Self {
        assert!(!route.is_empty(), "route must have at least one edge");
        Self {
            route,
            leg: 0,
            offset: 0.0,
        }
    }

    pub fn edge_index(&self) -> usize {
        self.route[self.leg]
    }

    pub fn edge_offset(&self) -> f64 {
        self.offset
    }

    pub fn position(&self, network: &RoadNetwork) -> Point {
        network.edge(self.edge_index()).position_at(self.offset)
    }

    /// Moves `distance` meters forward, carrying over edge ends.
    /// Returns false once the end of the final edge is reached.
    fn advance(&mut self, network: &RoadNetwork, mut distance: f64) -> bool {
        loop {
            let len = network.edge(self.edge_index()).length();
            let room = len - self.offset;
            if distance < room {
                self.offset += distance;
                return true;
            }
            if self.leg + 1 == self.route.len() {
                self.offset = len;
                return false;
            }
            distance -= room;
            self.leg += 1;
            self.offset = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub powertrain: Powertrain,
    pub cursor: RouteCursor,
    /// Fixed cruising speed; the edge speed limit applies when absent.
    pub speed_override_kmh: Option<f64>,
    pub mode: VehicleMode,
}

impl VehicleState {
    pub fn speed_kmh(&self, network: &RoadNetwork) -> f64 {
        self.speed_override_kmh
            .unwrap_or_else(|| network.edge(self.cursor.edge_index()).speed_limit_kmh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclistState {
    pub id: CyclistId,
    pub cursor: RouteCursor,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub cyclist_id: CyclistId,
    pub vehicle_id: VehicleId,
}

/// Everything that moves. Single writer; the whole world is `Send`.
#[derive(Debug, Clone)]
pub struct World {
    network: Arc<RoadNetwork>,
    time: f64,
    vehicles: BTreeMap<VehicleId, VehicleState>,
    cyclists: Vec<CyclistState>,
    mode_switches: u64,
}

impl World {
    pub fn new(network: Arc<RoadNetwork>) -> Self {
        Self {
            network,
            time: 0.0,
            vehicles: BTreeMap::new(),
            cyclists: Vec::new(),
            mode_switches: 0,
        }
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleState> {
        self.vehicles.values()
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.get(&id)
    }

    pub fn cyclists(&self) -> &[CyclistState] {
        &self.cyclists
    }

    /// Number of enacted mode changes so far.
    pub fn mode_switches(&self) -> u64 {
        self.mode_switches
    }

    pub fn add_vehicle(&mut self, vehicle: VehicleState) {
        self.vehicles.insert(vehicle.id, vehicle);
    }

    pub fn add_cyclist(&mut self, cyclist: CyclistState) {
        self.cyclists.push(cyclist);
    }

    /// Advances everything by `dt` seconds, removes arrivals and enacts
    /// commands that have become due. Returns the ids of removed vehicles.
    pub fn step(&mut self, dt: f64) -> Result<Vec<VehicleId>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!(
                "step length must be positive, got {dt}"
            )));
        }
        let network = Arc::clone(&self.network);
        self.time += dt;
        let mut arrived = Vec::new();
        for v in self.vehicles.values_mut() {
            let distance = v.speed_kmh(&network) / 3.6 * dt;
            if !v.cursor.advance(&network, distance) {
                arrived.push(v.id);
            }
        }
        for id in &arrived {
            self.vehicles.remove(id);
        }
        self.cyclists
            .retain_mut(|c| c.cursor.advance(&network, c.speed_kmh / 3.6 * dt));
        self.apply_due();
        Ok(arrived)
    }

    /// Queues a command; vehicles ignore modes their powertrain cannot enact.
    pub fn apply_command(&mut self, cmd: &ModeCommand) {
        if let Some(v) = self.vehicles.get_mut(&cmd.vehicle_id) {
            if v.powertrain.supports(cmd.mode) {
                v.mode.schedule(cmd.mode, cmd.issued_at, cmd.effective_at);
            }
        }
    }

    pub fn apply_due(&mut self) {
        let now = self.time;
        for v in self.vehicles.values_mut() {
            if v.mode.apply_due(now) {
                self.mode_switches += 1;
            }
        }
    }

    /// Every (vehicle, cyclist) pair within `range` meters, ordered by
    /// ascending vehicle id, then cyclist id.
    pub fn detect(&self, range: f64) -> Result<Vec<DetectionEvent>> {
        if !(range > 0.0) {
            return Err(Error::Domain(format!(
                "detection range must be positive, got {range}"
            )));
        }
        let cyclists: Vec<(CyclistId, Point)> = {
            let mut c: Vec<_> = self
                .cyclists
                .iter()
                .map(|c| (c.id.clone(), c.cursor.position(&self.network)))
                .collect();
            c.sort_by(|a, b| a.0.cmp(&b.0));
            c
        };
        let mut events = Vec::new();
        for v in self.vehicles.values() {
            let p = v.cursor.position(&self.network);
            for (cid, cp) in &cyclists {
                if p.distance(*cp) <= range {
                    events.push(DetectionEvent {
                        cyclist_id: cid.clone(),
                        vehicle_id: v.id,
                    });
                }
            }
        }
        Ok(events)
    }

    pub fn position_of(&self, id: VehicleId) -> Option<Point> {
        self.vehicles
            .get(&id)
            .map(|v| v.cursor.position(&self.network))
    }

    /// Vehicle snapshots as the controller sees them, ascending id.
    pub fn fleet(&self) -> Vec<FleetVehicle> {
        self.vehicles
            .values()
            .map(|v| FleetVehicle {
                id: v.id,
                position: v.cursor.position(&self.network),
                edge: self.network.edge(v.cursor.edge_index()).id.clone(),
                speed_kmh: v.speed_kmh(&self.network),
                class: v.class,
                powertrain: v.powertrain,
            })
            .collect()
    }

    /// Current tailpipe emission rate of one vehicle in g/min; zero unless polluting.
    pub fn emission_rate_of(
        &self,
        v: &VehicleState,
        table: &CoefficientTable,
        pollutant: PollutantKind,
    ) -> Result<f64> {
        if v.mode.current() == Mode::Electric || v.powertrain == Powertrain::PureEv {
            return Ok(0.0);
        }
        vehicle_emission_rate(v.class, pollutant, v.speed_kmh(&self.network), table)
    }

    /// Sum of emission rates of polluting vehicles, optionally restricted to `only`.
    pub fn aggregate_emission_rate(
        &self,
        table: &CoefficientTable,
        pollutant: PollutantKind,
        only: Option<&BTreeSet<VehicleId>>,
    ) -> Result<f64> {
        let mut total = 0.0;
        for v in self.vehicles.values() {
            if only.is_some_and(|set| !set.contains(&v.id)) {
                continue;
            }
            total += self.emission_rate_of(v, table, pollutant)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::EdgeId;
    use crate::sim::network::Edge;

    fn network() -> Arc<RoadNetwork> {
        let e = |id: &str, a: [f64; 2], b: [f64; 2]| {
            Edge::new(EdgeId::new(id), vec![a.into(), b.into()], 36.0, 1.0).unwrap()
        };
        Arc::new(
            RoadNetwork::new(vec![
                e("a", [0.0, 0.0], [100.0, 0.0]),
                e("b", [100.0, 0.0], [100.0, 50.0]),
            ])
            .unwrap(),
        )
    }

    fn vehicle(id: u32, route: Vec<usize>) -> VehicleState {
        VehicleState {
            id: VehicleId(id),
            class: VehicleClass::new(1).unwrap(),
            powertrain: Powertrain::Hybrid,
            cursor: RouteCursor::new(route),
            speed_override_kmh: None,
            mode: VehicleMode::new(Mode::Polluting),
        }
    }

    #[test]
    fn constant_speed_kinematics() {
        let mut w = World::new(network());
        w.add_vehicle(vehicle(1, vec![0]));
        w.step(1.0).unwrap();
        assert!((w.vehicle(VehicleId(1)).unwrap().cursor.edge_offset() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn carries_over_edges_and_removes_on_arrival() {
        let mut w = World::new(network());
        w.add_vehicle(vehicle(1, vec![0, 1]));
        for _ in 0..12 {
            w.step(1.0).unwrap();
        }
        let v = w.vehicle(VehicleId(1)).unwrap();
        assert_eq!(v.cursor.edge_index(), 1);
        assert!((v.cursor.edge_offset() - 20.0).abs() < 1e-9);
        assert_eq!(
            w.position_of(VehicleId(1)).unwrap(),
            Point::new(100.0, 20.0)
        );
        let mut removed = Vec::new();
        for _ in 0..3 {
            removed.extend(w.step(1.0).unwrap());
        }
        assert_eq!(removed, vec![VehicleId(1)]);
        assert!(w.vehicle(VehicleId(1)).is_none());
    }

    #[test]
    fn vehicle_at_route_end_is_removed() {
        let mut w = World::new(network());
        let mut v = vehicle(1, vec![0]);
        v.cursor.offset = 100.0;
        w.add_vehicle(v);
        assert_eq!(w.step(1.0).unwrap(), vec![VehicleId(1)]);
    }

    #[test]
    fn zero_step_is_rejected() {
        let mut w = World::new(network());
        assert!(w.step(0.0).is_err());
        assert!(w.step(-1.0).is_err());
    }

    #[test]
    fn detection_by_distance_in_vehicle_order() {
        let mut w = World::new(network());
        let mut a = vehicle(2, vec![0]);
        a.cursor.offset = 25.0;
        let mut b = vehicle(1, vec![0]);
        b.cursor.offset = 28.0;
        let mut far = vehicle(3, vec![0]);
        far.cursor.offset = 80.0;
        w.add_vehicle(a);
        w.add_vehicle(b);
        w.add_vehicle(far);
        let mut cursor = RouteCursor::new(vec![0]);
        cursor.offset = 30.0;
        w.add_cyclist(CyclistState {
            id: CyclistId::new("c"),
            cursor,
            speed_kmh: 15.0,
        });
        let ids: Vec<u32> = w
            .detect(10.0)
            .unwrap()
            .iter()
            .map(|e| e.vehicle_id.0)
            .collect();
        assert_eq!(ids, vec![1, 2]);
        assert!(w.detect(0.0).is_err());
    }

    #[test]
    fn electric_and_ev_vehicles_emit_nothing() {
        let table = CoefficientTable::bundled();
        let mut w = World::new(network());
        w.add_vehicle(vehicle(1, vec![0]));
        let mut ev = vehicle(2, vec![0]);
        ev.powertrain = Powertrain::PureEv;
        ev.mode = VehicleMode::new(Mode::Electric);
        w.add_vehicle(ev);
        let one = vehicle_emission_rate(
            VehicleClass::new(1).unwrap(),
            PollutantKind::Co,
            36.0,
            &table,
        )
        .unwrap();
        let total = w
            .aggregate_emission_rate(&table, PollutantKind::Co, None)
            .unwrap();
        assert!((total - one).abs() < 1e-12);

        w.apply_command(&ModeCommand {
            vehicle_id: VehicleId(1),
            mode: Mode::Electric,
            issued_at: 0.0,
            effective_at: 0.0,
        });
        w.apply_due();
        assert_eq!(
            w.aggregate_emission_rate(&table, PollutantKind::Co, None)
                .unwrap(),
            0.0
        );
        assert_eq!(w.mode_switches(), 1);
    }

    #[test]
    fn powertrains_ignore_unsupported_commands() {
        let mut w = World::new(network());
        let mut ice = vehicle(1, vec![0]);
        ice.powertrain = Powertrain::PureIce;
        w.add_vehicle(ice);
        w.apply_command(&ModeCommand {
            vehicle_id: VehicleId(1),
            mode: Mode::Electric,
            issued_at: 0.0,
            effective_at: 0.0,
        });
        w.apply_due();
        assert_eq!(
            w.vehicle(VehicleId(1)).unwrap().mode.current(),
            Mode::Polluting
        );
    }

    #[test]
    fn world_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<World>();
    }
}
