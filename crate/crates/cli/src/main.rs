//! `orthant-games`: check geometries, solve value fields, play games and
//! verify structural identities from a JSON run config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

pub const EXIT_OK: u8 = 0;
pub const EXIT_GEOMETRY: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_CONFIG: u8 = 64;
pub const EXIT_UNSUPPORTED: u8 = 65;
pub const EXIT_MISSING: u8 = 66;
pub const EXIT_IO: u8 = 74;

/// A command that did not finish: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "orthant-games", version, about = "Reflected-dynamics games on the nonnegative orthant")]
struct Cli {
    /// Run config (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Worker threads for the solvers.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the grid's nodes per axis.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Override the grid's box size.
    #[arg(long, global = true)]
    x_max: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the constraint geometry.
    Check,
    /// Solve and write the value field, level set and manifest.
    Solve {
        /// `finite` or `mintime`.
        #[arg(long, default_value = "finite")]
        mode: String,
    },
    /// Play the solved game from a state.
    Play {
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
    },
    /// Solve in memory and run the structural checks.
    Verify {
        /// `eq42`, `thm43` or `all`.
        #[arg(long, default_value = "all")]
        which: String,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, Failure> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    let mut cfg = config::RunConfig::load(&cli.config)?;
    if let Some(n) = cli.n {
        cfg.grid.n = n;
    }
    if let Some(x_max) = cli.x_max {
        cfg.grid.x_max = x_max;
    }
    cfg.validate()?;
    match cli.command {
        Command::Check => commands::check(&cfg),
        Command::Solve { mode } => commands::solve(&cfg, &mode),
        Command::Play { x0, t0 } => commands::play(&cfg, &x0, t0),
        Command::Verify { which } => commands::verify(&cfg, &which),
    }
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("values serialize");
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(report) => {
            let code = report.get("exit_code").and_then(|c| c.as_u64()).unwrap_or(0) as u8;
            print_json(&report);
            ExitCode::from(code)
        }
        Err(f) => {
            log::error!("{}", f.message);
            print_json(&json!({ "error": f.message, "exit_code": f.code }));
            ExitCode::from(f.code)
        }
    }
}
