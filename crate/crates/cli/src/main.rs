use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wflow_cli::manifest::RunManifest;
use wflow_cli::plot::emit_plots;
use wflow_cli::{run, CliError, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "wflow", version, about = "Displacement, entropic and Madelung flows on 1-D grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for random perturbations (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Double n and M this many times and report convergence orders.
        #[arg(long, default_value_t = 0)]
        refine: usize,
    },
    /// Redraw the SVG plots of a finished run.
    Plot { manifest: PathBuf },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("WFLOW_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("WFLOW_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| CliError::Internal(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out, seed, refine } => {
            let config = RunConfig::load(&config)?;
            let manifest = run(&config, &RunOptions { out, seed, refine })?;
            for level in &manifest.levels {
                println!("n = {}, M = {} ({:.2} s)", level.n, level.steps, level.wall_time_s);
                for (key, value) in &level.results {
                    println!("  {key:<28} {value:.6e}");
                }
                for (key, ok) in &level.checks {
                    println!("  {key:<28} {ok}");
                }
            }
            if let Some(c) = &manifest.convergence {
                let orders: Vec<String> = c.orders.iter().map(|o| format!("{o:.3}")).collect();
                println!("convergence orders of {}: {}", c.metric, orders.join(", "));
            }
            Ok(())
        }
        Command::Plot { manifest } => {
            let parsed = RunManifest::read(&manifest)?;
            let dir = manifest.parent().map(PathBuf::from).unwrap_or_default();
            for path in emit_plots(&parsed, &dir)? {
                println!("{}", dir.join(path).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
