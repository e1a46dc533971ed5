use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lzsm_entanglement::config::{Config, Method};
use lzsm_entanglement::error::{ConfigError, RunError};
use lzsm_entanglement::sweep::{describe_resonances, dynamics_to_dir, sweep_to_dir};
use lzsm_entanglement::verify::{run_verify, Faults};

#[derive(Parser)]
#[command(name = "lzsm", version, about = "Dissipative entanglement of two driven flux qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// C(t), trace and smallest eigenvalue from the ground state, one CSV per rate set.
    Dynamics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Averaged concurrence over a 1D or 2D parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides `sweep.method`.
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Cross-oracle checks; exits non-zero on any failure.
    Verify {
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resonance conditions at the configured parameters, closest first.
    Resonances {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<(Config, String), RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let cfg = Config::from_toml(&text)?;
    for w in cfg.params()?.perturbative_warnings() {
        log::warn!("{w}");
    }
    Ok((cfg, text))
}

fn run(cli: Cli) -> Result<bool, RunError> {
    match cli.command {
        Command::Dynamics { config, out } => {
            let (cfg, text) = load(&config)?;
            let manifest = dynamics_to_dir(&cfg, &text, &out)?;
            for o in &manifest.outputs {
                match o.entry_time_ns {
                    Some(t) => println!("{}  steady state from t = {t} ns", o.path),
                    None => println!("{}  steady state not reached", o.path),
                }
            }
        }
        Command::Sweep {
            config,
            out,
            workers,
            method,
        } => {
            let (cfg, text) = load(&config)?;
            let manifest = sweep_to_dir(&cfg, &text, &out, method, workers)?;
            for o in &manifest.outputs {
                println!("{}", o.path);
            }
            println!("{:.1} s", manifest.elapsed_s);
        }
        Command::Verify { out } => {
            let report = run_verify(&Faults::default());
            for c in &report.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("{status}  {:<44} {:.3e} < {:.1e}", c.name, c.value, c.bound);
            }
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(&path, text).map_err(|source| RunError::Io {
                    context: format!("writing {}", path.display()),
                    source,
                })?;
            }
            return Ok(report.passed());
        }
        Command::Resonances { config } => {
            let (cfg, _) = load(&config)?;
            print!("{}", describe_resonances(&cfg)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
