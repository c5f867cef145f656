use anyhow::Result;
use clap::{Parser, Subcommand};
use lowmach_cli::config::RunConfig;
use lowmach_cli::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lowmach",
    version,
    about = "Steady low-Mach compressible heat-conductive flow on the periodic box"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Construct one steady solution by the splitting fixed-point iteration.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json (and state.bin with --save).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Bypass the smallness gates; divergence detection still applies.
        #[arg(long)]
        force: bool,
        /// Override the config seed for randomized diagnostics.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the final state snapshot to OUT/state.bin.
        #[arg(long)]
        save: bool,
        /// Start the outer iteration from a saved state snapshot.
        #[arg(long)]
        load: Option<PathBuf>,
    },
    /// Solve along a decreasing Mach ladder and fit the limit rates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Concurrent ladder rows (default from the config).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Manufactured-solution verification of the incompressible stage.
    Mms {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the module invariant suite at the configured trial count.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| format!("{e:#}"))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Solve { config, out, force, seed, save, load } => {
            match load_config(&config, seed) {
                Ok(cfg) => runner::cmd_solve(&cfg, &out, force, save, load.as_deref()),
                Err(msg) => {
                    eprintln!("config error: {msg}");
                    Ok(runner::EXIT_CONFIG)
                }
            }
        }
        Cmd::Sweep { config, out, force, workers, seed } => match load_config(&config, seed) {
            Ok(cfg) => {
                let workers = workers.unwrap_or(cfg.workers);
                if workers == 0 {
                    eprintln!("config error: workers must be at least 1");
                    return Ok(runner::EXIT_CONFIG);
                }
                runner::cmd_sweep(&cfg, &out, force, workers)
            }
            Err(msg) => {
                eprintln!("config error: {msg}");
                Ok(runner::EXIT_CONFIG)
            }
        },
        Cmd::Mms { config, out } => match load_config(&config, None) {
            Ok(cfg) => runner::cmd_mms(&cfg, &out),
            Err(msg) => {
                eprintln!("config error: {msg}");
                Ok(runner::EXIT_CONFIG)
            }
        },
        Cmd::Check { config, out, seed } => match load_config(&config, seed) {
            Ok(cfg) => {
                let seed = cfg.seed;
                runner::cmd_check(&cfg, &out, seed)
            }
            Err(msg) => {
                eprintln!("config error: {msg}");
                Ok(runner::EXIT_CONFIG)
            }
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
