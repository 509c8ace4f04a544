//! Command-line front end for `mfbm-core`.
//!
//! Each run writes its outputs (CSV tables, JSON reports, optional SVG) and
//! a `manifest.json` recording the resolved parameters into `--out-dir`.
//! `--manifest <file>` re-runs a recorded command.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! numerical failures.

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod plot;

use args::{Cli, Command};
use error::{CliError, CliResult};
use manifest::{unix_ms, RunManifest, MANIFEST_FILE};

/// Result of a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub summary: Vec<String>,
}

/// Parses `args` (program name first), runs, prints, and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command line: resolves the command (or loads it from a
/// manifest), executes it on a pool of the requested size and writes all
/// outputs.
pub fn execute(cli: Cli) -> CliResult<Outcome> {
    let command = match (cli.command, &cli.manifest) {
        (Some(_), Some(_)) => return Err(CliError::usage("give either a subcommand or --manifest, not both")),
        (None, None) => return Err(CliError::usage("no subcommand given; see --help")),
        (Some(cmd), None) => cmd.resolve()?,
        (None, Some(path)) => RunManifest::read(path)?.command,
    };
    if cli.threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    execute_command(command, &cli.out_dir, cli.threads)
}

/// Executes an already resolved command.
pub fn execute_command(command: Command, out_dir: &Path, threads: Option<usize>) -> CliResult<Outcome> {
    let started = unix_ms();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))?;
    let products = pool.install(|| commands::run_command(&command))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &products.files {
        formats::write_file(&out_dir.join(name), bytes)?;
        outputs.push(name.clone());
    }
    let manifest = RunManifest::new(command, threads, started, outputs);
    let path = out_dir.join(MANIFEST_FILE);
    formats::write_file(&path, manifest.to_json().as_bytes())?;
    let mut summary = products.summary;
    summary.push(format!("wrote {} files and {} to {}", manifest.outputs.len(), MANIFEST_FILE, out_dir.display()));
    Ok(Outcome { manifest, summary })
}
