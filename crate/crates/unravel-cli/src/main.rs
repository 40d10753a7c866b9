//! Command-line front end: one subcommand per task, a `--seed` override and
//! optional plot-script emission.
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 on numerical
//! guard failures (for example a tripped Fock-truncation guard), 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use unravel::cli::{self, RunConfig, RunError, Task};

#[derive(Parser)]
#[command(
    name = "unravel",
    version,
    about = "Quantum-jump and homodyne trajectory simulations with dense oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML), or a previously written run manifest
    /// (.manifest.json) to reproduce.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output path prefix.
    #[arg(long)]
    out: Option<String>,
    /// Also write a gnuplot script next to the data file.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Quantum-jump (photon counting) trajectory ensemble.
    Simulate(CommonArgs),
    /// Diffusive homodyne trajectory ensemble.
    Homodyne(CommonArgs),
    /// Deterministic master-equation evolution.
    Master(CommonArgs),
    /// Two-time correlation function (oracle or paired trajectories).
    Correlate(CommonArgs),
    /// Photon-count distribution over a horizon.
    Counting(CommonArgs),
    /// Waiting-time density for the next count.
    Waiting(CommonArgs),
}

impl Command {
    fn task(&self) -> Task {
        match self {
            Command::Simulate(_) => Task::Trajectories,
            Command::Homodyne(_) => Task::Homodyne,
            Command::Master(_) => Task::Master,
            Command::Correlate(_) => Task::Correlate,
            Command::Counting(_) => Task::Counting,
            Command::Waiting(_) => Task::Waiting,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Homodyne(a)
            | Command::Master(a)
            | Command::Correlate(a)
            | Command::Counting(a)
            | Command::Waiting(a) => a,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| RunError::Io(format!("{}: {e}", args.config.display())))?;
    let is_manifest = args
        .config
        .to_string_lossy()
        .ends_with(".manifest.json");
    let cfg = if is_manifest {
        cli::config_from_manifest(&text)?
    } else {
        cli::parse_config(&text)?
    };
    Ok(cfg)
}

fn execute(command: &Command) -> Result<(), RunError> {
    let args = command.args();
    let mut cfg = load_config(args)?;
    if cfg.task != command.task() {
        return Err(cli::ConfigError::Invalid(format!(
            "config task `{}` does not match subcommand `{}`",
            cfg.task.name(),
            command.task().name()
        ))
        .into());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.path = out.clone();
    }
    let report = cli::run(&cfg)?;
    for file in &report.data_files {
        println!("wrote {}", file.display());
    }
    println!("wrote {}", report.manifest.display());
    if args.plot {
        let script = cli::emit_plot_script(&report.data_files[0], cfg.task.name())?;
        println!("wrote {}", script.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
