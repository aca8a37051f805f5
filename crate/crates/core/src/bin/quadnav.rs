//! Command-line front end: single runs, Monte Carlo batches, gain synthesis
//! and invariant checks driven by a scenario JSON file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quadnav::harness::{export_csv, monte_carlo, mse_metrics, simulate_run, Scenario, SensorSet};
use quadnav::numerics::{dare_residual, norm_inf};
use quadnav::validate::run_checks;
use quadnav::{Error, Result};

#[derive(Parser)]
#[command(
    name = "quadnav",
    version,
    about = "Quadrotor LQG-servo simulation with intermittent sensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario JSON; omitted fields take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario sensor set.
    #[arg(long, value_enum)]
    sensors: Option<Sensors>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sensors {
    ImuUwb,
    ImuUwbYolo,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop run; prints a summary and optionally writes the CSV log.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// CSV output path.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Batch of runs with per-run seeds derived from the scenario seed.
    Montecarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Writes the report as JSON to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Synthesizes the servo gain and prints it with its diagnostics.
    Gains {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Runs the invariant suites on the scenario.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let mut sc = match &args.config {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(s) = args.sensors {
        sc.sensor_set = match s {
            Sensors::ImuUwb => SensorSet::ImuUwb,
            Sensors::ImuUwbYolo => SensorSet::ImuUwbYolo,
        };
    }
    sc.validate()?;
    Ok(sc)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn print_matrix(m: &quadnav::numerics::Matrix) {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.4}")).collect();
        println!("  {}", cells.join(" "));
    }
}

/// Returns the process exit code on success paths that still report failure.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let sc = load(&scenario)?;
            let log = simulate_run(&sc, sc.seed)?;
            if let Some(path) = &out {
                export_csv(&log, path)?;
            }
            println!("sensors            {}", sc.sensor_set.label());
            println!("seed               {}", sc.seed);
            println!("steps              {}", log.records.len());
            println!("position outages   {}", log.position_outage_steps);
            if let Ok(m) = mse_metrics(&log) {
                println!(
                    "estimation MSE     x {:.5}  y {:.5}  z {:.5}",
                    m.estimation[0], m.estimation[1], m.estimation[2]
                );
                println!("path MSE           {:.5}", m.path);
            }
            if let Some(path) = &out {
                println!("csv                {}", path.display());
            }
            match &log.failure {
                Some(f) => {
                    eprintln!("run failed at step {}: {}", f.step, f.reason);
                    Ok(2)
                }
                None => Ok(0),
            }
        }
        Command::Montecarlo {
            scenario,
            runs,
            json,
        } => {
            let sc = load(&scenario)?;
            if runs == 0 {
                return Err(Error::InvalidArgument("--runs must be positive".into()));
            }
            let report = monte_carlo(&sc, runs)?;
            print!("{}", report.to_table());
            if let Some(path) = &json {
                let text = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Config(e.to_string()))?;
                write_file(path, &text)?;
            }
            Ok(0)
        }
        Command::Gains { scenario } => {
            let sc = load(&scenario)?;
            let (am, gain) = sc.gain()?;
            let w = sc.weights.to_weights()?;
            let res = dare_residual(
                &am.nominal_phi_bar(),
                &am.gamma_bar,
                &w.q_bar,
                &w.r,
                gain.s.matrix(),
            )?;
            println!("L (4x15, columns x y z φ θ ψ ẋ ẏ ż p q r ix iy iz):");
            print_matrix(&gain.full());
            println!(
                "riccati residual        {res:.3e} (‖S‖∞ {:.3e})",
                norm_inf(gain.s.matrix())
            );
            println!("closed-loop radius      {:.6}", gain.closed_loop_radius);
            Ok(0)
        }
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            let checks = run_checks(&sc)?;
            for c in &checks {
                println!(
                    "[{}] {:<22} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(if checks.iter().all(|c| c.pass) { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
