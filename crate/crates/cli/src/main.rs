//! `growfrag`: runs the growth-fragmentation experiments from a flat
//! key-value config and writes CSV, SVG and key-value artifacts.
//!
//! Exit codes: 0 success, 1 config or schema error, 2 failed assumption
//! check or unsupported parameter regime, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use growfrag::io::KeyValue;

use crate::commands::{dispatch, AssumptionFailed, Ctx};
use crate::config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "growfrag", version, about = "Growth-fragmentation numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "growfrag-out")]
    out: PathBuf,
    /// Seed for randomized cases.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Overrides the command's time step key.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Overrides `grid.n`.
    #[arg(long = "grid-n", global = true)]
    grid_n: Option<usize>,
    /// Suppresses the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve for the Perron eigenpair and export it.
    Eigen,
    /// Run the discretised PDE with diagnostics.
    SimulatePde,
    /// Integrate a reduced ODE system.
    SimulateOde,
    /// Equilibria, assumption checks and local stability of a reduced system.
    SteadyStates,
    /// Hopf scan of the prion system over p.
    HopfScan,
    /// Integrate a reduced system and look for a limit cycle.
    LimitCycle,
    /// Floquet exponent against the averaged eigenvalues.
    FloquetCompare,
    /// Regenerate one of the phase-plane figures.
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
    },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::SimulatePde => "simulate-pde",
            Command::SimulateOde => "simulate-ode",
            Command::SteadyStates => "steady-states",
            Command::HopfScan => "hopf-scan",
            Command::LimitCycle => "limit-cycle",
            Command::FloquetCompare => "floquet-compare",
            Command::Figure { .. } => "figure",
        }
    }

    fn dt_key(self) -> Option<&'static str> {
        match self {
            Command::SimulatePde => Some("pde.dt"),
            Command::SimulateOde | Command::LimitCycle => Some("ode.dt"),
            Command::FloquetCompare => Some("floquet.dt"),
            Command::Figure { .. } => Some("figure.dt"),
            _ => None,
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    if e.downcast_ref::<AssumptionFailed>().is_some() {
        return 2;
    }
    if let Some(g) = e.downcast_ref::<growfrag::Error>() {
        use growfrag::Error::*;
        return match g {
            Config(_) | Io(_) | Cfl { .. } => 1,
            Domain(_) | Constraint(_) | Unsupported(_) => 2,
            Numerical { .. } | Degenerate(_) => 3,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 1;
    }
    3
}

fn configure(cli: &Cli) -> Result<Config, ConfigError> {
    let raw = Config::load(cli.config.as_deref())?;
    let mut cfg = Config::validate(cli.command.name(), raw)?;
    if let Some(dt) = cli.dt {
        let key = cli
            .command
            .dt_key()
            .ok_or_else(|| ConfigError(format!("--dt is not used by '{}'", cli.command.name())))?;
        cfg.set(key, dt.to_string())?;
    }
    if let Some(n) = cli.grid_n {
        cfg.set("grid.n", n.to_string())?;
    }
    Ok(cfg)
}

fn manifest(cli: &Cli, cfg: Option<&Config>, status: &str, code: u8, started: Instant) -> KeyValue {
    let mut kv = KeyValue::new();
    kv.text("command", cli.command.name());
    if let Command::Figure { which } = cli.command {
        kv.int("figure", which as usize);
    }
    kv.text("status", status)
        .int("exit_code", code as usize)
        .text("config_file", cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default())
        .text("seed", cli.seed.to_string());
    if let Some(cfg) = cfg {
        for (k, v) in cfg.entries() {
            kv.text(&format!("config.{k}"), v.clone());
        }
    }
    kv.text("version.growfrag", growfrag::VERSION)
        .text("version.growfrag-cli", env!("CARGO_PKG_VERSION"))
        .flag("feature.parallel", cfg!(feature = "parallel"))
        .num("wall_time_s", started.elapsed().as_secs_f64());
    kv
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let cfg = configure(&cli);
    let result = match &cfg {
        Ok(cfg) => {
            let figure = match cli.command {
                Command::Figure { which } => Some(which),
                _ => None,
            };
            dispatch(cli.command.name(), figure, &Ctx { cfg, out: &cli.out, seed: cli.seed })
        }
        Err(e) => Err(anyhow::Error::new(ConfigError(e.0.clone()))),
    };
    let (code, status) = match &result {
        Ok(_) => (0, "ok".to_string()),
        Err(e) => (exit_code(e), format!("error: {e:#}")),
    };
    let kv = manifest(&cli, cfg.as_ref().ok(), &status, code, started);
    let written = std::fs::create_dir_all(&cli.out).is_ok() && kv.write(&cli.out.join("manifest.txt")).is_ok();
    match result {
        Ok(outcome) => {
            if !cli.quiet {
                print!("{}", outcome.summary.render());
                println!("wrote {} artifact(s) to {}", outcome.artifacts.len() + 1, cli.out.display());
            }
            if !written {
                eprintln!("warning: could not write the manifest to {}", cli.out.display());
            }
        }
        Err(e) => eprintln!("growfrag {}: {e:#}", cli.command.name()),
    }
    ExitCode::from(code)
}
