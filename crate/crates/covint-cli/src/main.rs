//! `covint`: bracketed Riemann integration and change-of-variables
//! verification from problem config files.
//!
//! Exit codes: 0 success / Verified, 1 usage or config error,
//! 2 inconclusive / budget exceeded, 3 identity violation detected.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ProblemConfig;
use report::Record;

#[derive(Parser)]
#[command(
    name = "covint",
    version,
    about = "Bracketed Riemann integration, Jordan content and numerical change-of-variables verification"
)]
struct Cli {
    /// Problem configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write a machine-readable result record to this file
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override the seed for all randomized probes
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap. The current implementation evaluates serially in a fixed
    /// order, so results are bit-identical for every value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace the depth schedule by this single depth
    #[arg(long, global = true)]
    depth: Option<u32>,
    /// Override the convergence tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Bracketed integral of f over the domain
    Integrate,
    /// Inner/outer Jordan content of the domain
    Content,
    /// Verify the change-of-variables identity for the configured map
    Cov,
    /// Outer content of the image of the near-singular region
    Sard,
    /// Construct and verify a delta-fine dotted partition for the gauge
    Cousin,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Integrate => "integrate",
            Command::Content => "content",
            Command::Cov => "cov",
            Command::Sard => "sard",
            Command::Cousin => "cousin",
        }
    }
}

fn run(cli: &Cli) -> Result<i32, String> {
    let path = cli.config.as_ref().ok_or("missing --config PATH")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = ProblemConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.options.seed = seed;
    }
    if let Some(depth) = cli.depth {
        cfg.options.depths = vec![depth];
    }
    if let Some(tol) = cli.tol {
        cfg.options.tol = tol;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err("--threads must be at least 1".into());
        }
    }

    let mut record = Record::new(cli.command.name());
    record.push("run.threads", cli.threads.unwrap_or(1));
    record.push_config(&cfg);

    let code = match cli.command {
        Command::Integrate => commands::cmd_integrate(&cfg, &mut record),
        Command::Content => commands::cmd_content(&cfg, &mut record),
        Command::Cov => commands::cmd_cov(&cfg, &mut record),
        Command::Sard => commands::cmd_sard(&cfg, &mut record),
        Command::Cousin => commands::cmd_cousin(&cfg, &mut record),
    }
    .map_err(|e| e.0)?;
    record.push("run.exit_code", code);

    if let Some(out) = &cli.out {
        std::fs::write(out, record.render())
            .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
