mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Optimal control of bilinear systems x' = (A + u B) x.
#[derive(Debug, Parser)]
#[command(name = "bilinctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the initial control of a manifest; writes trajectory.csv.
    Simulate { manifest: PathBuf },
    /// Structural report for a problem file or the problem of a manifest.
    Analyze { path: PathBuf },
    /// Run the configured method; writes iterations.csv, control.csv, trajectory.csv.
    Solve { manifest: PathBuf },
    /// Rerun a built-in example with all three methods.
    Reproduce {
        /// 1 or 2.
        example: u8,
        #[arg(long, default_value = "reproduce")]
        out: PathBuf,
        /// Grid step (the published runs use 0.0005).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 10)]
        iters: usize,
    },
    /// Write a built-in example as problem.json plus manifest.json.
    Example {
        example: u8,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Exit status for malformed or inconsistent input.
pub const EXIT_INPUT: u8 = 2;
/// Exit status when the solver stops without improving.
pub const EXIT_STALL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Solver(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Solver(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { manifest } => commands::simulate(&manifest),
        Command::Analyze { path } => commands::analyze(&path),
        Command::Solve { manifest } => commands::solve(&manifest),
        Command::Reproduce {
            example,
            out,
            h,
            iters,
        } => commands::reproduce(example, &out, h, iters),
        Command::Example { example, out } => commands::example(example, &out),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let (Failure::Input(e) | Failure::Solver(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
    }
}
