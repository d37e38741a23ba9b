use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use darcy_spectral::cli;

#[derive(Parser)]
#[command(name = "solve", version, about = "Spectral solver for Darcy flow with heat and mass transfer")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation described by a TOML config.
    Run { config: PathBuf },
    /// Temporal convergence study of the 3D manufactured solution.
    Table1 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral convergence study of the 2D manufactured solution.
    Spectral {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the coefficients of a config and report bounds.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("trace"));
    logger.init();
    if std::env::var_os("RUST_LOG").is_none() {
        log::set_max_level(log::LevelFilter::Warn);
    }
    let result = match &args.command {
        Command::Run { config } => cli::cmd_run(config),
        Command::Table1 { out } => cli::cmd_table1(out.as_deref()).map(|_| ()),
        Command::Spectral { out } => cli::cmd_spectral(out.as_deref()).map(|_| ()),
        Command::Validate { config } => cli::cmd_validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
