//! Run orchestration and outputs: baseline comparison, seed sweeps, CSV
//! traces, JSON summaries and plot-ready tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{Background, BackgroundSample, CommandRecord, Mode};
use crate::error::{Error, Result, Violation};
use crate::ids::{EdgeId, VehicleId};
use crate::optimizer::{GeofenceProblem, ProblemEntry};
use crate::sim::{run, run_baseline, Scenario, ScenarioTrace};

/// Realized rates may exceed the budget by this much and still count as within it.
const WITHIN_BUDGET_TOLERANCE: f64 = 1e-9;

pub const TRACE_FILE: &str = "trace.csv";
pub const COMMAND_LOG_FILE: &str = "commands.csv";
pub const VEHICLE_FILE: &str = "vehicles.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Per-edge cyclist density weights, read from a two-column CSV
/// (`edge_id,weight`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityFile {
    pub weights: BTreeMap<EdgeId, f64>,
}

impl DensityFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn from_csv_str(text: &str, source_name: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            edge_id: String,
            weight: f64,
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut weights = BTreeMap::new();
        let mut violations = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let path = format!("row[{i}]");
            match row {
                Err(e) => violations.push(Violation::new(path, e.to_string())),
                Ok(r) => {
                    if !(r.weight >= 1.0 && r.weight.is_finite()) {
                        violations.push(Violation::new(
                            format!("{path}.weight"),
                            format!("must be >= 1.0, got {}", r.weight),
                        ));
                    } else if weights.insert(EdgeId::new(&r.edge_id), r.weight).is_some() {
                        violations.push(Violation::new(
                            format!("{path}.edge_id"),
                            format!("duplicate edge {:?}", r.edge_id),
                        ));
                    }
                }
            }
        }
        if violations.is_empty() {
            Ok(Self { weights })
        } else {
            Err(Error::Validation {
                source_name: source_name.to_string(),
                violations,
            })
        }
    }

    /// Overrides the scenario's weights; edges the network lacks are rejected.
    pub fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        let unknown: Vec<Violation> = self
            .weights
            .keys()
            .filter(|id| scenario.network.get(id).is_none())
            .map(|id| Violation::new(format!("edge_id {id}"), "unknown edge"))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Validation {
                source_name: "density file".into(),
                violations: unknown,
            });
        }
        for (id, &w) in &self.weights {
            scenario.network.set_density_weight(id, w)?;
        }
        Ok(())
    }
}

/// `--background` accepts either a constant level or a CSV file with
/// `time_s,level` columns.
pub fn parse_background(arg: &str) -> Result<Background> {
    if let Ok(level) = arg.trim().parse::<f64>() {
        if !level.is_finite() {
            return Err(Error::Domain(format!(
                "background level must be finite, got {arg}"
            )));
        }
        return Ok(Background::Constant(level));
    }
    let path = Path::new(arg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            source_name: arg.to_string(),
            message: e.to_string(),
        })?;
    let samples = reader
        .deserialize::<BackgroundSample>()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Background::series(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    /// Steps with at least one active fence; the means below are over these.
    pub fence_steps: usize,
    pub decision_ticks: usize,
    pub control_mean_in_fence_g_per_min: f64,
    pub control_max_in_fence_g_per_min: f64,
    pub baseline_mean_in_fence_g_per_min: f64,
    pub baseline_max_in_fence_g_per_min: f64,
    /// Mean E(Δ) over fence steps.
    pub budget_g_per_min: f64,
    /// Fraction of fence steps whose realized in-fence rate is within the budget.
    pub fraction_within_budget: f64,
    pub control_mode_switches: u64,
    /// Fraction of present steps spent polluting, for vehicles that were ever in a fence.
    pub dwell_polluting: BTreeMap<VehicleId, f64>,
}

impl RunSummary {
    pub fn new(
        scenario: &str,
        seed: u64,
        control: &ScenarioTrace,
        baseline: &ScenarioTrace,
    ) -> Self {
        let fence_rows: Vec<_> = control.fence_rows().collect();
        let n = fence_rows.len();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            if n == 0 {
                0.0
            } else {
                xs.sum::<f64>() / n as f64
            }
        };
        let within = fence_rows
            .iter()
            .filter(|r| r.in_fence_rate <= r.budget + WITHIN_BUDGET_TOLERANCE)
            .count();

        let fenced: BTreeSet<VehicleId> = control
            .vehicles
            .iter()
            .filter(|v| v.in_fence)
            .map(|v| v.vehicle_id)
            .collect();
        let mut dwell: BTreeMap<VehicleId, (usize, usize)> = BTreeMap::new();
        for v in control
            .vehicles
            .iter()
            .filter(|v| fenced.contains(&v.vehicle_id))
        {
            let e = dwell.entry(v.vehicle_id).or_default();
            e.1 += 1;
            if v.mode == Mode::Polluting {
                e.0 += 1;
            }
        }

        Self {
            scenario: scenario.to_string(),
            seed,
            fence_steps: n,
            decision_ticks: control.decision_count,
            control_mean_in_fence_g_per_min: control.mean_in_fence_rate(),
            control_max_in_fence_g_per_min: control.max_in_fence_rate(),
            baseline_mean_in_fence_g_per_min: baseline.mean_in_fence_rate(),
            baseline_max_in_fence_g_per_min: baseline.max_in_fence_rate(),
            budget_g_per_min: mean(&mut fence_rows.iter().map(|r| r.budget)),
            fraction_within_budget: if n == 0 {
                1.0
            } else {
                within as f64 / n as f64
            },
            control_mode_switches: control.mode_switches,
            dwell_polluting: dwell
                .into_iter()
                .map(|(id, (p, t))| (id, p as f64 / t as f64))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub summary: RunSummary,
    pub control: ScenarioTrace,
    pub baseline: ScenarioTrace,
}

/// Runs the scenario with the controller off and on, same seed. The baseline
/// reads only the spawn stream, so both runs see identical traffic.
pub fn run_compare(scenario: &Scenario, seed: u64) -> Result<Comparison> {
    let baseline = run_baseline(scenario, seed)?;
    let control = run(scenario, seed)?;
    Ok(Comparison {
        summary: RunSummary::new(&scenario.name, seed, &control, &baseline),
        control,
        baseline,
    })
}

/// Compares every seed in parallel; results come back in seed order.
pub fn sweep(scenario: &Scenario, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    seeds
        .par_iter()
        .map(|&seed| run_compare(scenario, seed).map(|c| c.summary))
        .collect()
}

/// Parses `a..b` (exclusive) or `a..=b` (inclusive).
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::Domain(format!(
            "seed range must look like a..b or a..=b, got {s:?}"
        ))
    };
    let (lo, hi, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive {
        (lo..=hi).collect()
    } else {
        (lo..hi).collect()
    };
    if seeds.is_empty() {
        return Err(Error::Domain(format!("seed range {s:?} is empty")));
    }
    Ok(seeds)
}

fn to_csv<T: Serialize>(rows: &[T], headers: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(headers)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn trace_csv(trace: &ScenarioTrace) -> Result<String> {
    to_csv(
        &trace.rows,
        &[
            "sim_time",
            "fence_ids",
            "fence_x",
            "fence_y",
            "member_count",
            "vehicle_count",
            "polluting_count",
            "in_fence_rate",
            "out_of_fence_rate",
            "total_rate",
            "budget",
            "expected_rate",
        ],
    )
}

pub fn command_log_csv(commands: &[CommandRecord]) -> Result<String> {
    to_csv(
        commands,
        &[
            "sim_time",
            "fence_id",
            "vehicle_id",
            "d_i",
            "e_i",
            "x_i",
            "draw",
            "commanded_mode",
            "effective_time",
        ],
    )
}

pub fn vehicles_csv(trace: &ScenarioTrace) -> Result<String> {
    to_csv(
        &trace.vehicles,
        &[
            "sim_time",
            "vehicle_id",
            "edge",
            "x",
            "y",
            "speed_kmh",
            "euro_class",
            "powertrain",
            "mode",
            "in_fence",
        ],
    )
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `trace.csv`, `commands.csv` and `vehicles.csv` into `dir`.
pub fn write_trace(trace: &ScenarioTrace, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (TRACE_FILE, trace_csv(trace)?),
        (COMMAND_LOG_FILE, command_log_csv(&trace.commands)?),
        (VEHICLE_FILE, vehicles_csv(trace)?),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        write_file(&p, &body)?;
        written.push(p);
    }
    Ok(written)
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    write_file(path, &summary.to_json())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlotKind {
    /// Total network emission rate over time.
    TotalEmissionsVsTime,
    /// In-fence emission rate without and with control.
    InFenceBeforeAfter,
    /// Per-vehicle d, e, x at one decision (by default the one with most members).
    PerVehicleAssignmentSnapshot { at: Option<f64> },
    /// Decision statistics grouped by number of vehicles in the fence.
    FleetSizeSweep,
}

impl PlotKind {
    pub const NAMES: [&'static str; 4] = [
        "total_emissions_vs_time",
        "in_fence_before_after",
        "per_vehicle_assignment_snapshot",
        "fleet_size_sweep",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::TotalEmissionsVsTime => Self::NAMES[0],
            PlotKind::InFenceBeforeAfter => Self::NAMES[1],
            PlotKind::PerVehicleAssignmentSnapshot { .. } => Self::NAMES[2],
            PlotKind::FleetSizeSweep => Self::NAMES[3],
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total_emissions_vs_time" => Ok(PlotKind::TotalEmissionsVsTime),
            "in_fence_before_after" => Ok(PlotKind::InFenceBeforeAfter),
            "per_vehicle_assignment_snapshot" => {
                Ok(PlotKind::PerVehicleAssignmentSnapshot { at: None })
            }
            "fleet_size_sweep" => Ok(PlotKind::FleetSizeSweep),
            other => Err(Error::Domain(format!(
                "unknown plot kind {other:?}; expected one of {}",
                PlotKind::NAMES.join(", ")
            ))),
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Decision snapshots from a command log: optimization rows grouped by (time, fence).
pub fn decision_snapshots(
    commands: &[CommandRecord],
) -> BTreeMap<(u64, String), Vec<&CommandRecord>> {
    let mut out: BTreeMap<(u64, String), Vec<&CommandRecord>> = BTreeMap::new();
    for c in commands
        .iter()
        .filter(|c| c.x_i.is_some() && c.e_i.is_some())
    {
        out.entry((c.sim_time.to_bits(), c.fence_id.clone()))
            .or_default()
            .push(c);
    }
    out
}

/// Builds plot data. `baseline` is required for [`PlotKind::InFenceBeforeAfter`].
pub fn emit_plot_data(
    trace: &ScenarioTrace,
    kind: PlotKind,
    baseline: Option<&ScenarioTrace>,
) -> Result<PlotTable> {
    if trace.rows.is_empty() {
        return Err(Error::Domain("trace is empty".into()));
    }
    match kind {
        PlotKind::TotalEmissionsVsTime => {
            let mut t = PlotTable::new(&["sim_time", "vehicle_count", "total_rate"]);
            for r in &trace.rows {
                t.rows
                    .push(vec![r.sim_time, r.vehicle_count as f64, r.total_rate]);
            }
            Ok(t)
        }
        PlotKind::InFenceBeforeAfter => {
            let base = baseline.ok_or_else(|| {
                Error::Domain("in_fence_before_after needs a baseline trace".into())
            })?;
            if base.rows.len() != trace.rows.len() {
                return Err(Error::Domain(
                    "baseline and control traces differ in length".into(),
                ));
            }
            let mut t = PlotTable::new(&["sim_time", "before", "after", "budget"]);
            for (b, c) in base.rows.iter().zip(&trace.rows) {
                if c.fence_active() || b.fence_active() {
                    t.rows
                        .push(vec![c.sim_time, b.in_fence_rate, c.in_fence_rate, c.budget]);
                }
            }
            Ok(t)
        }
        PlotKind::PerVehicleAssignmentSnapshot { at } => {
            let snaps = decision_snapshots(&trace.commands);
            let chosen = match at {
                Some(time) => snaps
                    .iter()
                    .find(|((t, _), _)| (f64::from_bits(*t) - time).abs() < 1e-9),
                None => snaps.iter().max_by_key(|(_, rows)| rows.len()),
            };
            let (_, rows) = chosen.ok_or_else(|| {
                Error::Domain(match at {
                    Some(t) => format!("no decision recorded at t={t}"),
                    None => "no decisions recorded".into(),
                })
            })?;
            let mut t = PlotTable::new(&["sim_time", "vehicle_id", "d", "e", "x", "polluting"]);
            for c in rows {
                t.rows.push(vec![
                    c.sim_time,
                    c.vehicle_id.0 as f64,
                    c.d_i.unwrap_or(f64::NAN),
                    c.e_i.unwrap_or(f64::NAN),
                    c.x_i.unwrap_or(f64::NAN),
                    if c.commanded_mode == Mode::Polluting {
                        1.0
                    } else {
                        0.0
                    },
                ]);
            }
            Ok(t)
        }
        PlotKind::FleetSizeSweep => {
            // member count -> (decisions, sum of demand, sum of expected, sum of mean x)
            let mut groups: BTreeMap<usize, (usize, f64, f64, f64)> = BTreeMap::new();
            for rows in decision_snapshots(&trace.commands).values() {
                let demand: f64 = rows.iter().filter_map(|c| c.e_i).sum();
                let expected: f64 = rows
                    .iter()
                    .map(|c| c.e_i.unwrap_or(0.0) * c.x_i.unwrap_or(0.0))
                    .sum();
                let mean_x = rows.iter().filter_map(|c| c.x_i).sum::<f64>() / rows.len() as f64;
                let g = groups.entry(rows.len()).or_default();
                g.0 += 1;
                g.1 += demand;
                g.2 += expected;
                g.3 += mean_x;
            }
            let mut t = PlotTable::new(&[
                "members",
                "decisions",
                "mean_demand",
                "mean_expected_rate",
                "mean_x",
            ]);
            for (n, (k, d, e, x)) in groups {
                let k_f = k as f64;
                t.rows.push(vec![n as f64, k_f, d / k_f, e / k_f, x / k_f]);
            }
            Ok(t)
        }
    }
}

/// Writes every plot table that applies into `dir` as `plot_<kind>.csv`.
pub fn write_plot_data(
    trace: &ScenarioTrace,
    baseline: Option<&ScenarioTrace>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for name in PlotKind::NAMES {
        let kind: PlotKind = name.parse()?;
        let table = match emit_plot_data(trace, kind, baseline) {
            Ok(t) => t,
            // Plots that need data the run did not produce are skipped.
            Err(Error::Domain(msg)) => {
                log::info!("skipping plot {name}: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let p = dir.join(format!("plot_{name}.csv"));
        write_file(&p, &table.to_csv()?)?;
        written.push(p);
    }
    Ok(written)
}

/// Problem file for `solve-debug`:
///
/// ```toml
/// limit = 2.0
/// [[entry]]
/// id = 1
/// d = 1.0
/// e = 1.0
/// ```
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugProblem {
    pub limit: f64,
    #[serde(rename = "entry", default)]
    pub entries: Vec<DebugEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugEntry {
    pub id: u32,
    pub d: f64,
    pub e: f64,
}

impl DebugProblem {
    pub fn load(path: &Path) -> Result<GeofenceProblem> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<GeofenceProblem> {
        let raw: DebugProblem = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        GeofenceProblem::new(
            raw.entries
                .iter()
                .map(|e| ProblemEntry::new(VehicleId(e.id), e.d, e.e))
                .collect(),
            raw.limit,
        )
    }
}

/// Human-readable solution table: one line per vehicle plus totals.
pub fn format_solution(problem: &GeofenceProblem) -> String {
    use std::fmt::Write;
    let a = crate::optimizer::solve(problem);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>10} {:>10} {:>12} {:>10}",
        "vehicle_id", "d", "e (g/min)", "x"
    );
    for entry in problem.entries() {
        let x = a.get(entry.vehicle_id).unwrap_or(0.0);
        let _ = writeln!(
            s,
            "{:>10} {:>10.4} {:>12.6} {:>10.6}",
            entry.vehicle_id.0, entry.density, entry.emission, x
        );
    }
    let _ = writeln!(s, "limit       {:.6} g/min", problem.limit());
    let _ = writeln!(s, "sum x*e     {:.6} g/min", a.expected_emission(problem));
    let _ = writeln!(s, "objective   {:.6}", a.objective_value());
    s
}
