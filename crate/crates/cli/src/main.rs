//! `gauduchon run <config>` solves a scenario; `gauduchon verify <config>`
//! runs the identity suite on its data without solving.
//!
//! Exit status: 0 when every assertion holds, 1 on an assertion or solver
//! failure, 2 on a configuration error.

mod checks;
mod config;
mod report;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ScenarioConfig;
use scenarios::{Mode, ScenarioError};

/// Output directory override, below `--out` and above the config file.
const OUT_DIR_ENV: &str = "GAUDUCHON_OUT_DIR";

#[derive(Parser)]
#[command(name = "gauduchon", version, about = "Gauduchon Calabi-Yau solver on complex tori")]
struct Cli {
    /// Seed for random instances; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides GAUDUCHON_OUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in the config.
    Run { config: PathBuf },
    /// Check operator identities on the config's data without solving.
    Verify { config: PathBuf },
}

fn output_dir(cli_out: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    cli_out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (path, mode) = match cli.command {
        Command::Run { config } => (config, Mode::Run),
        Command::Verify { config } => (config, Mode::Verify),
    };
    let mut cfg = match ScenarioConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = output_dir(cli.out, &cfg);
    let outcome = match scenarios::execute(&cfg, mode) {
        Ok(o) => o,
        Err(ScenarioError::Config(e)) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
        Err(ScenarioError::Failed(o)) => o,
    };
    if let Err(e) = report::write_outputs(&dir, &cfg, mode, &outcome) {
        eprintln!("writing outputs: {e:#}");
        return ExitCode::from(1);
    }
    print!("{}", report::render_report(&cfg, mode, &outcome));
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
