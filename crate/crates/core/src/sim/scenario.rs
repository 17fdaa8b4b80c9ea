//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "demo"
//!
//! [simulation]
//! dt_s = 1.0                 # step length
//! horizon_s = 600.0          # run length
//! detection_range_m = 10.0   # vehicle-to-cyclist detection distance
//! coefficient_table = "table.toml"   # optional, relative to the scenario file
//!
//! [controller]
//! control = true             # false runs the uncontrolled baseline
//! single_vehicle = false     # only the detecting vehicle goes electric
//! radius_m = 100.0
//! allowable_limit_g_per_min = 1.0
//! tau_s = 1.0
//! switch_interval_s = 1.0
//! expiry_timeout_s = 20.0
//! actuation_latency_s = 0.0
//! force_detector_electric = false
//!
//! [background]
//! constant = 0.0             # or a series:
//! # [[background.sample]]
//! # time_s = 0.0
//! # level = 0.0
//!
//! [[edge]]
//! id = "main"
//! geometry = [[0.0, 0.0], [1000.0, 0.0]]   # meters
//! speed_limit_kmh = 40.0
//! density = 3.0              # optional, defaults to 1.0
//!
//! [[vehicle]]                # a single spawn
//! time_s = 0.0
//! route = ["main"]
//! class = 2                  # optional, drawn uniformly from 1..=4
//! speed_kmh = 30.0           # optional, defaults to the edge limit
//! powertrain = "hybrid"      # hybrid | pure_ev | pure_ice
//!
//! [[flow]]                   # periodic spawns in [start_s, end_s)
//! route = ["main"]
//! start_s = 0.0
//! end_s = 300.0
//! period_s = 4.0
//! jitter_s = 0.0             # optional, uniform delay added to each spawn
//!
//! [[cyclist]]
//! id = "tag-01"
//! route = ["main"]
//! speed_kmh = 15.0
//! start_s = 0.0
//! ```
//!
//! Validation reports every violation with its field path.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coordinator::{Background, BackgroundSample, ControlMode, ControllerConfig, Powertrain};
use crate::emission::{CoefficientTable, VehicleClass};
use crate::error::{Error, Result, Violation};
use crate::geometry::Point;
use crate::ids::{CyclistId, EdgeId};
use crate::sim::network::{Edge, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub dt_s: f64,
    pub horizon_s: f64,
    pub detection_range_m: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt_s: 1.0,
            horizon_s: 600.0,
            detection_range_m: 10.0,
        }
    }
}

impl SimSettings {
    pub fn step_count(&self) -> usize {
        (self.horizon_s / self.dt_s + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpawn {
    pub time_s: f64,
    pub route: Vec<EdgeId>,
    pub class: Option<VehicleClass>,
    pub speed_kmh: Option<f64>,
    pub powertrain: Powertrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub route: Vec<EdgeId>,
    pub start_s: f64,
    pub end_s: f64,
    pub period_s: f64,
    pub jitter_s: f64,
    pub class: Option<VehicleClass>,
    pub speed_kmh: Option<f64>,
    pub powertrain: Powertrain,
}

impl Flow {
    /// Nominal spawn times, before jitter.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..)
            .map(move |i| self.start_s + i as f64 * self.period_s)
            .take_while(move |&t| t < self.end_s - 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclistSpawn {
    pub id: CyclistId,
    pub route: Vec<EdgeId>,
    pub speed_kmh: f64,
    pub start_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub simulation: SimSettings,
    pub controller: ControllerConfig,
    pub background: Background,
    /// Path as written in the file; `table` holds the loaded result.
    pub coefficient_table: Option<String>,
    pub table: CoefficientTable,
    pub network: RoadNetwork,
    pub vehicles: Vec<VehicleSpawn>,
    pub flows: Vec<Flow>,
    pub cyclists: Vec<CyclistSpawn>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    simulation: Option<RawSimulation>,
    controller: Option<RawController>,
    background: Option<RawBackground>,
    #[serde(rename = "edge", default)]
    edges: Vec<RawEdge>,
    #[serde(rename = "vehicle", default, skip_serializing_if = "Vec::is_empty")]
    vehicles: Vec<RawVehicle>,
    #[serde(rename = "flow", default, skip_serializing_if = "Vec::is_empty")]
    flows: Vec<RawFlow>,
    #[serde(rename = "cyclist", default, skip_serializing_if = "Vec::is_empty")]
    cyclists: Vec<RawCyclist>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    dt_s: Option<f64>,
    horizon_s: Option<f64>,
    detection_range_m: Option<f64>,
    coefficient_table: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    control: Option<bool>,
    single_vehicle: Option<bool>,
    radius_m: Option<f64>,
    allowable_limit_g_per_min: Option<f64>,
    tau_s: Option<f64>,
    switch_interval_s: Option<f64>,
    expiry_timeout_s: Option<f64>,
    actuation_latency_s: Option<f64>,
    force_detector_electric: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackground {
    constant: Option<f64>,
    #[serde(rename = "sample", default, skip_serializing_if = "Vec::is_empty")]
    samples: Vec<BackgroundSample>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    id: String,
    geometry: Vec<[f64; 2]>,
    speed_limit_kmh: f64,
    density: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    time_s: f64,
    route: Vec<String>,
    class: Option<u8>,
    speed_kmh: Option<f64>,
    powertrain: Option<Powertrain>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    route: Vec<String>,
    start_s: f64,
    end_s: f64,
    period_s: f64,
    jitter_s: Option<f64>,
    class: Option<u8>,
    speed_kmh: Option<f64>,
    powertrain: Option<Powertrain>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCyclist {
    id: String,
    route: Vec<String>,
    speed_kmh: f64,
    start_s: Option<f64>,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, path: impl Into<String>, msg: impl Into<String>) -> bool {
        if !ok {
            self.violations.push(Violation::new(path, msg));
        }
        ok
    }

    fn positive(&mut self, v: f64, path: &str) -> bool {
        self.check(
            v > 0.0 && v.is_finite(),
            path,
            format!("must be a finite number > 0, got {v}"),
        )
    }

    fn non_negative(&mut self, v: f64, path: &str) -> bool {
        self.check(
            v >= 0.0 && v.is_finite(),
            path,
            format!("must be a finite number >= 0, got {v}"),
        )
    }

    fn class(&mut self, c: Option<u8>, path: &str) -> Option<VehicleClass> {
        let c = c?;
        match VehicleClass::new(c) {
            Ok(c) => Some(c),
            Err(e) => {
                self.violations.push(Violation::new(path, e.to_string()));
                None
            }
        }
    }

    fn route(
        &mut self,
        network: Option<&RoadNetwork>,
        route: &[String],
        path: &str,
    ) -> Vec<EdgeId> {
        let ids: Vec<EdgeId> = route.iter().map(EdgeId::new).collect();
        if let Some(net) = network {
            if let Err(e) = net.resolve_route(&ids) {
                self.violations.push(Violation::new(path, e.to_string()));
            }
        }
        ids
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string(), path.parent())
    }

    /// Parses and validates a scenario. `base_dir` resolves a relative coefficient table path.
    pub fn from_toml_str(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        Self::from_raw(raw, source_name, base_dir)
    }

    fn from_raw(raw: RawScenario, source_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut ck = Checker {
            violations: Vec::new(),
        };

        let rs = raw.simulation.unwrap_or_default();
        let defaults = SimSettings::default();
        let simulation = SimSettings {
            dt_s: rs.dt_s.unwrap_or(defaults.dt_s),
            horizon_s: rs.horizon_s.unwrap_or(defaults.horizon_s),
            detection_range_m: rs.detection_range_m.unwrap_or(defaults.detection_range_m),
        };
        ck.positive(simulation.dt_s, "simulation.dt_s");
        if ck.positive(simulation.horizon_s, "simulation.horizon_s") {
            ck.check(
                simulation.horizon_s >= simulation.dt_s,
                "simulation.horizon_s",
                "must be at least one step long",
            );
        }
        ck.positive(simulation.detection_range_m, "simulation.detection_range_m");

        let table = match &rs.coefficient_table {
            None => Some(CoefficientTable::bundled()),
            Some(p) => {
                let resolved: PathBuf = match base_dir {
                    Some(dir) if Path::new(p).is_relative() => dir.join(p),
                    _ => PathBuf::from(p),
                };
                match CoefficientTable::load(&resolved) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        ck.violations.push(Violation::new(
                            "simulation.coefficient_table",
                            e.to_string(),
                        ));
                        None
                    }
                }
            }
        };

        let rc = raw.controller.unwrap_or_default();
        let dc = ControllerConfig::default();
        let control = rc.control.unwrap_or(true);
        let single = rc.single_vehicle.unwrap_or(false);
        let controller = ControllerConfig {
            tau_s: rc.tau_s.unwrap_or(dc.tau_s),
            switch_interval_s: rc
                .switch_interval_s
                .or(rc.tau_s)
                .unwrap_or(dc.switch_interval_s),
            expiry_timeout_s: rc.expiry_timeout_s.unwrap_or(dc.expiry_timeout_s),
            allowable_limit_g_per_min: rc
                .allowable_limit_g_per_min
                .unwrap_or(dc.allowable_limit_g_per_min),
            actuation_latency_s: rc.actuation_latency_s.unwrap_or(dc.actuation_latency_s),
            radius_m: rc.radius_m.unwrap_or(dc.radius_m),
            force_detector_electric: rc.force_detector_electric.unwrap_or(false),
            mode: match (control, single) {
                (false, _) => ControlMode::Off,
                (true, true) => ControlMode::SingleVehicle,
                (true, false) => ControlMode::Geofence,
            },
            pollutant: dc.pollutant,
        };
        ck.positive(controller.tau_s, "controller.tau_s");
        ck.positive(controller.switch_interval_s, "controller.switch_interval_s");
        ck.positive(controller.expiry_timeout_s, "controller.expiry_timeout_s");
        ck.non_negative(
            controller.actuation_latency_s,
            "controller.actuation_latency_s",
        );
        ck.positive(controller.radius_m, "controller.radius_m");
        ck.check(
            controller.allowable_limit_g_per_min.is_finite(),
            "controller.allowable_limit_g_per_min",
            "must be finite",
        );

        let background = match raw.background {
            None => Background::default(),
            Some(RawBackground {
                constant: Some(_),
                samples,
            }) if !samples.is_empty() => {
                ck.check(
                    false,
                    "background",
                    "give either `constant` or `sample`s, not both",
                );
                Background::default()
            }
            Some(RawBackground {
                constant: Some(c), ..
            }) => {
                ck.check(c.is_finite(), "background.constant", "must be finite");
                Background::Constant(c)
            }
            Some(RawBackground { samples, .. }) => match Background::series(samples) {
                Ok(b) => b,
                Err(e) => {
                    ck.violations
                        .push(Violation::new("background.sample", e.to_string()));
                    Background::default()
                }
            },
        };

        let mut edges = Vec::with_capacity(raw.edges.len());
        let mut seen = HashSet::new();
        ck.check(
            !raw.edges.is_empty(),
            "edge",
            "at least one edge is required",
        );
        for (i, e) in raw.edges.iter().enumerate() {
            let path = format!("edge[{i}]");
            let mut ok = ck.check(!e.id.is_empty(), format!("{path}.id"), "must not be empty");
            ok &= ck.check(
                seen.insert(e.id.clone()),
                format!("{path}.id"),
                format!("duplicate edge id {:?}", e.id),
            );
            let density = e.density.unwrap_or(1.0);
            ok &= ck.check(
                density >= 1.0 && density.is_finite(),
                format!("{path}.density"),
                format!("must be >= 1.0, got {density}"),
            );
            ok &= ck.positive(e.speed_limit_kmh, &format!("{path}.speed_limit_kmh"));
            if !ok {
                continue;
            }
            let geometry = e.geometry.iter().map(|&p| Point::from(p)).collect();
            match Edge::new(EdgeId::new(&e.id), geometry, e.speed_limit_kmh, density) {
                Ok(edge) => edges.push(edge),
                Err(err) => ck
                    .violations
                    .push(Violation::new(format!("{path}.geometry"), err.to_string())),
            }
        }
        let network = if edges.len() == raw.edges.len() {
            RoadNetwork::new(edges).ok()
        } else {
            None
        };

        let mut vehicles = Vec::with_capacity(raw.vehicles.len());
        for (i, v) in raw.vehicles.iter().enumerate() {
            let path = format!("vehicle[{i}]");
            ck.non_negative(v.time_s, &format!("{path}.time_s"));
            if let Some(s) = v.speed_kmh {
                ck.positive(s, &format!("{path}.speed_kmh"));
            }
            vehicles.push(VehicleSpawn {
                time_s: v.time_s,
                route: ck.route(network.as_ref(), &v.route, &format!("{path}.route")),
                class: ck.class(v.class, &format!("{path}.class")),
                speed_kmh: v.speed_kmh,
                powertrain: v.powertrain.unwrap_or_default(),
            });
        }

        let mut flows = Vec::with_capacity(raw.flows.len());
        for (i, f) in raw.flows.iter().enumerate() {
            let path = format!("flow[{i}]");
            ck.non_negative(f.start_s, &format!("{path}.start_s"));
            ck.check(
                f.end_s >= f.start_s && f.end_s.is_finite(),
                format!("{path}.end_s"),
                "must be finite and >= start_s",
            );
            ck.positive(f.period_s, &format!("{path}.period_s"));
            let jitter_s = f.jitter_s.unwrap_or(0.0);
            ck.non_negative(jitter_s, &format!("{path}.jitter_s"));
            if let Some(s) = f.speed_kmh {
                ck.positive(s, &format!("{path}.speed_kmh"));
            }
            flows.push(Flow {
                route: ck.route(network.as_ref(), &f.route, &format!("{path}.route")),
                start_s: f.start_s,
                end_s: f.end_s,
                period_s: f.period_s,
                jitter_s,
                class: ck.class(f.class, &format!("{path}.class")),
                speed_kmh: f.speed_kmh,
                powertrain: f.powertrain.unwrap_or_default(),
            });
        }

        let mut cyclists = Vec::with_capacity(raw.cyclists.len());
        let mut cyclist_ids = HashSet::new();
        for (i, c) in raw.cyclists.iter().enumerate() {
            let path = format!("cyclist[{i}]");
            ck.check(!c.id.is_empty(), format!("{path}.id"), "must not be empty");
            ck.check(
                cyclist_ids.insert(c.id.clone()),
                format!("{path}.id"),
                format!("duplicate cyclist id {:?}", c.id),
            );
            ck.positive(c.speed_kmh, &format!("{path}.speed_kmh"));
            let start_s = c.start_s.unwrap_or(0.0);
            ck.non_negative(start_s, &format!("{path}.start_s"));
            cyclists.push(CyclistSpawn {
                id: CyclistId::new(&c.id),
                route: ck.route(network.as_ref(), &c.route, &format!("{path}.route")),
                speed_kmh: c.speed_kmh,
                start_s,
            });
        }

        match (ck.violations.is_empty(), network, table) {
            (true, Some(network), Some(table)) => Ok(Scenario {
                name: raw.name.unwrap_or_else(|| "scenario".into()),
                simulation,
                controller,
                background,
                coefficient_table: rs.coefficient_table,
                table,
                network,
                vehicles,
                flows,
                cyclists,
            }),
            _ => Err(Error::Validation {
                source_name: source_name.to_string(),
                violations: ck.violations,
            }),
        }
    }

    /// Canonical TOML form with every default spelled out.
    pub fn to_toml_string(&self) -> String {
        let c = &self.controller;
        let (constant, samples) = match &self.background {
            Background::Constant(v) => (Some(*v), Vec::new()),
            Background::Series(s) => (None, s.clone()),
        };
        let route = |r: &[EdgeId]| r.iter().map(|e| e.0.clone()).collect::<Vec<_>>();
        let raw = RawScenario {
            name: Some(self.name.clone()),
            simulation: Some(RawSimulation {
                dt_s: Some(self.simulation.dt_s),
                horizon_s: Some(self.simulation.horizon_s),
                detection_range_m: Some(self.simulation.detection_range_m),
                coefficient_table: self.coefficient_table.clone(),
            }),
            controller: Some(RawController {
                control: Some(c.mode != ControlMode::Off),
                single_vehicle: Some(c.mode == ControlMode::SingleVehicle),
                radius_m: Some(c.radius_m),
                allowable_limit_g_per_min: Some(c.allowable_limit_g_per_min),
                tau_s: Some(c.tau_s),
                switch_interval_s: Some(c.switch_interval_s),
                expiry_timeout_s: Some(c.expiry_timeout_s),
                actuation_latency_s: Some(c.actuation_latency_s),
                force_detector_electric: Some(c.force_detector_electric),
            }),
            background: Some(RawBackground { constant, samples }),
            edges: self
                .network
                .edges()
                .iter()
                .map(|e| RawEdge {
                    id: e.id.0.clone(),
                    geometry: e.geometry.iter().map(|&p| p.into()).collect(),
                    speed_limit_kmh: e.speed_limit_kmh,
                    density: Some(e.density_weight),
                })
                .collect(),
            vehicles: self
                .vehicles
                .iter()
                .map(|v| RawVehicle {
                    time_s: v.time_s,
                    route: route(&v.route),
                    class: v.class.map(u8::from),
                    speed_kmh: v.speed_kmh,
                    powertrain: Some(v.powertrain),
                })
                .collect(),
            flows: self
                .flows
                .iter()
                .map(|f| RawFlow {
                    route: route(&f.route),
                    start_s: f.start_s,
                    end_s: f.end_s,
                    period_s: f.period_s,
                    jitter_s: Some(f.jitter_s),
                    class: f.class.map(u8::from),
                    speed_kmh: f.speed_kmh,
                    powertrain: Some(f.powertrain),
                })
                .collect(),
            cyclists: self
                .cyclists
                .iter()
                .map(|c| RawCyclist {
                    id: c.id.0.clone(),
                    route: route(&c.route),
                    speed_kmh: c.speed_kmh,
                    start_s: Some(c.start_s),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("scenario serializes")
    }
}
