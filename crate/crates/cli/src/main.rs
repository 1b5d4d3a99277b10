use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::info;
use poredry::scenarios::by_name;
use poredry::sim::{run, sweep, sweep_csv, Termination};
use poredry::validation::{check_bubble, check_capillary, CheckReport};
use poredry::{Error, SimConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "poredry", version, about = "Binder migration during drying of porous films")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation to its stop rule.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory for snapshots and the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Independent runs over one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// One of k_viscosity, k_evap, k_surf, theta, seed, c0.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `3,6,9`.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in check and report pass or fail.
    Validate {
        #[arg(long, value_enum)]
        case: Case,
        #[arg(long)]
        full_scale: bool,
    },
    /// Print the config of a built-in scenario.
    Scenario {
        name: String,
        #[arg(long)]
        full_scale: bool,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("src").required(true).args(["config", "scenario"])))]
struct Source {
    /// Config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Paper-scale grid for built-in scenarios.
    #[arg(long, requires = "scenario")]
    full_scale: bool,
}

impl Source {
    fn load(&self) -> poredry::Result<SimConfig> {
        match (&self.config, &self.scenario) {
            (Some(path), _) => SimConfig::load(path),
            (None, Some(name)) => Ok(by_name(name, self.full_scale)?.config),
            (None, None) => Err(Error::Config("give --config or --scenario".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Bubble,
    Capillary,
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn error_code(e: &Error) -> u8 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_SOLVER
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { source, out } => {
            let mut config = match source.load() {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if out.is_some() {
                config.output.dir = out;
            }
            let manifest = match run(&config) {
                Ok(m) => m,
                Err(e) => return fail(error_code(&e), e),
            };
            let d = &manifest.diagnostics;
            println!(
                "{}: {} steps, t* = {:.4}, m = {}, breakthrough t* = {}, {:.1} s",
                manifest.name,
                manifest.steps,
                manifest.records.last().map_or(0.0, |r| r.time_star),
                d.m.map_or("-".into(), |m| format!("{m:.4}")),
                d.t_breakthrough.map_or("-".into(), |t| format!("{t:.4}")),
                manifest.wall_clock_s
            );
            match &manifest.termination {
                Termination::SolverFailure { step, message, .. } => {
                    fail(EXIT_SOLVER, format!("solver failure at step {step}: {message}"))
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Command::Sweep {
            source,
            axis,
            values,
            out,
        } => {
            let config = match source.load() {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let values: Vec<f64> = match values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| format!("bad sweep value `{v}`")))
                .collect()
            {
                Ok(v) => v,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            info!("sweeping {axis} over {values:?}");
            match sweep(&config, &axis, &values, out.as_deref()) {
                Ok(points) => {
                    print!("{}", sweep_csv(&axis, &points));
                    if points.iter().any(|p| p.outcome.is_err()) {
                        ExitCode::from(EXIT_SOLVER)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(error_code(&e), e),
            }
        }
        Command::Validate { case, full_scale } => {
            let report: poredry::Result<CheckReport> = match case {
                Case::Bubble => check_bubble(full_scale, 20),
                Case::Capillary => check_capillary(full_scale, 0.8),
            };
            match report {
                Ok(r) => {
                    println!("{}", r.line());
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_ACCEPTANCE)
                    }
                }
                Err(e) => fail(error_code(&e), e),
            }
        }
        Command::Scenario { name, full_scale } => {
            match by_name(&name, full_scale).and_then(|s| s.config.to_toml_string()) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(EXIT_CONFIG, e),
            }
        }
    }
}
