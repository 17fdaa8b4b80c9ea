use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geofence_core::coordinator::ControlMode;
use geofence_core::report::{self, DebugProblem, DensityFile, RunSummary};
use geofence_core::sim::{self, Scenario};
use geofence_core::{Error, Result};

/// Geofenced emission control simulator.
#[derive(Parser)]
#[command(name = "geofence-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, command log and vehicle CSVs.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write plot tables.
        #[arg(long)]
        plots: bool,
    },
    /// Run with and without control and write both traces plus a summary.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare over a seed range (`a..b` or `a..=b`) in parallel.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seeds: String,
        /// Write the summaries as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one problem file and print the assignment.
    SolveDebug {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Check a scenario file and report every violation.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Disable the controller (uncontrolled baseline).
    #[arg(long)]
    no_control: bool,
    /// Only the detecting vehicle switches to electric.
    #[arg(long, conflicts_with = "no_control")]
    single_vehicle: bool,
    /// Decision interval in seconds; also sets the switch interval.
    #[arg(long)]
    tau: Option<f64>,
    /// Geofence radius in meters.
    #[arg(long)]
    radius: Option<f64>,
    /// Allowable limit L in g/min.
    #[arg(long)]
    limit: Option<f64>,
    /// Background level: a constant in g/min, or a CSV with `time_s,level`.
    #[arg(long)]
    background: Option<String>,
    /// Edge density weights CSV with `edge_id,weight`.
    #[arg(long)]
    density: Option<PathBuf>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.scenario)?;
        let c = &mut s.controller;
        if self.no_control {
            c.mode = ControlMode::Off;
        } else if self.single_vehicle {
            c.mode = ControlMode::SingleVehicle;
        }
        if let Some(t) = self.tau {
            c.tau_s = t;
            c.switch_interval_s = t;
        }
        if let Some(r) = self.radius {
            c.radius_m = r;
        }
        if let Some(l) = self.limit {
            c.allowable_limit_g_per_min = l;
        }
        c.validate()?;
        if let Some(b) = &self.background {
            s.background = report::parse_background(b)?;
        }
        if let Some(d) = &self.density {
            DensityFile::load(d)?.apply(&mut s)?;
        }
        Ok(s)
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            plots,
        } => {
            let s = scenario.load()?;
            let trace = sim::run(&s, seed)?;
            report::write_trace(&trace, &out)?;
            if plots {
                report::write_plot_data(&trace, None, &out)?;
            }
            println!(
                "{}: {} steps, {} decisions, mean in-fence {:.4} g/min -> {}",
                s.name,
                trace.rows.len(),
                trace.decision_count,
                trace.mean_in_fence_rate(),
                out.display()
            );
        }
        Command::Compare {
            scenario,
            seed,
            out,
        } => {
            let s = scenario.load()?;
            let cmp = report::run_compare(&s, seed)?;
            report::write_trace(&cmp.control, &out.join("control"))?;
            report::write_trace(&cmp.baseline, &out.join("baseline"))?;
            report::write_plot_data(&cmp.control, Some(&cmp.baseline), &out)?;
            report::write_summary(&cmp.summary, &out.join(report::SUMMARY_FILE))?;
            print_summary(&cmp.summary);
        }
        Command::Sweep {
            scenario,
            seeds,
            out,
        } => {
            let s = scenario.load()?;
            let seeds = report::parse_seed_range(&seeds)?;
            let summaries = report::sweep(&s, &seeds)?;
            write_json(&summaries, out.as_deref())?;
        }
        Command::SolveDebug { problem } => {
            let p = DebugProblem::load(&problem)?;
            print!("{}", report::format_solution(&p));
        }
        Command::Validate { scenario } => {
            let s = scenario.load()?;
            println!(
                "{}: ok ({} edges, {} vehicles, {} flows, {} cyclists)",
                s.name,
                s.network.edges().len(),
                s.vehicles.len(),
                s.flows.len(),
                s.cyclists.len()
            );
        }
    }
    Ok(())
}

fn print_summary(s: &RunSummary) {
    println!("scenario            {}", s.scenario);
    println!("seed                {}", s.seed);
    println!("fence steps         {}", s.fence_steps);
    println!("decision ticks      {}", s.decision_ticks);
    println!(
        "baseline mean/max   {:.4} / {:.4} g/min",
        s.baseline_mean_in_fence_g_per_min, s.baseline_max_in_fence_g_per_min
    );
    println!(
        "control mean/max    {:.4} / {:.4} g/min",
        s.control_mean_in_fence_g_per_min, s.control_max_in_fence_g_per_min
    );
    println!("budget (mean)       {:.4} g/min", s.budget_g_per_min);
    println!(
        "within budget       {:.1}%",
        100.0 * s.fraction_within_budget
    );
    println!("mode switches       {}", s.control_mode_switches);
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
