//! `hcr`: command-line workbench around the `hcr-core` library.
//!
//! Four subcommands cover the experiment loop: `generate` writes synthetic
//! datasets, `train` optimizes the composite objective and records metrics,
//! `diagnose` compares the two heads' distance structures on a checkpoint,
//! and `verify-theory` re-runs the structural checks against their frozen
//! bounds.
//!
//! Exit codes: 0 on success, 1 on runtime failure (bad files, degenerate
//! data, a failed theory check), 2 on usage errors. Every run writes a
//! `manifest.json` into its output directory before the real work starts.

mod diagnose;
mod generate;
mod manifest;
mod train;
mod verify_theory;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hcr", version, about = "Hyperspherical consistency workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset as CSV.
    Generate(generate::GenerateArgs),
    /// Train the two-headed network and record per-epoch metrics.
    Train(train::TrainArgs),
    /// Compare classifier-sphere and projection distances on a checkpoint.
    Diagnose(diagnose::DiagnoseArgs),
    /// Check the geometric and information-theoretic claims numerically.
    VerifyTheory(verify_theory::VerifyTheoryArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Generate(args) => generate::run(&args).map(|()| 0),
        Command::Train(args) => train::run(&args).map(|()| 0),
        Command::Diagnose(args) => diagnose::run(&args).map(|()| 0),
        Command::VerifyTheory(args) => verify_theory::run(&args),
    }
}

/// Reports a post-parse usage problem the way clap reports parse errors:
/// message on stderr, exit code 2.
pub(crate) fn usage_error(message: &str) -> ! {
    eprintln!("error: {message}");
    std::process::exit(2);
}

/// Output directory: `--out` if given, else `$HCR_OUT_DIR`, else the
/// working directory. Created if missing.
pub(crate) fn resolve_out_dir(out: Option<&Path>) -> anyhow::Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os("HCR_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}
